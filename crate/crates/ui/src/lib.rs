//! Client-side state for the overview, unique sequence, individual record,
//! and attribute chart views. All analytic values come from the server.

pub mod api;
pub mod client;
pub mod render;

pub use api::{AggregateRequest, Api, ApiFailure, Level, OverviewRequest, RecordList, SequenceList, SplitResult};
pub use client::{Client, UiError, Update, ViewState};
pub use render::{event_color, render_cluster, CellShape, ClusterShape, Layout, PALETTE, SLIDER_STEP};
