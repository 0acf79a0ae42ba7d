//! Geometry for one cluster box. Pure layout over a `ClusterView`.

use std::collections::BTreeMap;

use seqlod_core::aggtree::NodeId;
use seqlod_core::representation::ClusterView;
use seqlod_core::EventId;

/// Twelve categorical hues; types past the twelfth share them by name hash.
pub const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#17becf", "#8c564b",
];

pub const SLIDER_STEP: f64 = 0.05;

/// Merged cells with more bars than this draw one bar per type, sorted by share.
pub const SORTED_BARS_ABOVE: usize = 24;

/// Merged cells with more bars than this draw a gray density box.
pub const GRAY_ABOVE: usize = 60;

pub const GRAY: &str = "#9e9e9e";

pub fn event_color(event_types: &[String], id: EventId) -> &'static str {
    let i = id.index();
    if i < PALETTE.len() {
        return PALETTE[i];
    }
    let name = event_types.get(i).map(String::as_str).unwrap_or("");
    // FNV-1a keeps the mapping stable across runs
    let hash = name
        .bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3));
    PALETTE[(hash % PALETTE.len() as u64) as usize]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    /// Height of a cluster holding every record.
    pub overview_height: f64,
    pub min_cluster_height: f64,
    pub column_width: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            overview_height: 600.0,
            min_cluster_height: 6.0,
            column_width: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellShape {
    Box { event: EventId, color: &'static str },
    /// Ordered bars of a merged cell.
    Bars(Vec<(EventId, &'static str)>),
    /// One bar per type with its count, largest first.
    SortedBars(Vec<(EventId, usize, &'static str)>),
    Gray { events: usize },
}

/// A drawn cell spanning rows `first_row..=last_row` of one column. Gaps
/// produce no block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub column: usize,
    pub first_row: usize,
    pub last_row: usize,
    pub y: f64,
    pub height: f64,
    pub shape: CellShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterShape {
    pub node_id: NodeId,
    pub height: f64,
    pub width: f64,
    pub dotted: bool,
    pub row_heights: Vec<f64>,
    pub blocks: Vec<Block>,
}

fn cell_shape(events: &[EventId], event_types: &[String]) -> CellShape {
    if events.len() == 1 {
        return CellShape::Box {
            event: events[0],
            color: event_color(event_types, events[0]),
        };
    }
    if events.len() > GRAY_ABOVE {
        return CellShape::Gray { events: events.len() };
    }
    if events.len() > SORTED_BARS_ABOVE {
        let mut counts: BTreeMap<EventId, usize> = BTreeMap::new();
        for &e in events {
            *counts.entry(e).or_default() += 1;
        }
        let mut bars: Vec<_> = counts
            .into_iter()
            .map(|(e, n)| (e, n, event_color(event_types, e)))
            .collect();
        bars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        return CellShape::SortedBars(bars);
    }
    CellShape::Bars(events.iter().map(|&e| (e, event_color(event_types, e))).collect())
}

pub fn render_cluster(view: &ClusterView, event_types: &[String], layout: &Layout) -> ClusterShape {
    let mut height = view.record_share * layout.overview_height;
    if view.small_cluster {
        height = height.max(layout.min_cluster_height);
    }
    let row_heights: Vec<f64> = view
        .rows
        .iter()
        .map(|r| {
            if view.record_count == 0 {
                0.0
            } else {
                height * r.frequency as f64 / view.record_count as f64
            }
        })
        .collect();
    let mut offsets = Vec::with_capacity(row_heights.len());
    let mut y = 0.0;
    for h in &row_heights {
        offsets.push(y);
        y += h;
    }

    let width = view.column_origin.len();
    let mut blocks = Vec::new();
    for column in 0..width {
        let mut r = 0;
        while r < view.rows.len() {
            let events = &view.rows[r].cells[column].events;
            if events.is_empty() {
                r += 1;
                continue;
            }
            // equal single events in consecutive rows share one box
            let mut last = r;
            if events.len() == 1 {
                while last + 1 < view.rows.len() && view.rows[last + 1].cells[column].events == *events {
                    last += 1;
                }
            }
            blocks.push(Block {
                column,
                first_row: r,
                last_row: last,
                y: offsets[r],
                height: row_heights[r..=last].iter().sum(),
                shape: cell_shape(events, event_types),
            });
            r = last + 1;
        }
    }
    ClusterShape {
        node_id: view.node_id,
        height,
        width: width as f64 * layout.column_width,
        dotted: view.small_cluster,
        row_heights,
        blocks,
    }
}
