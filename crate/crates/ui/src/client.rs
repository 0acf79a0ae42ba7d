//! Coordinated view state. Every number the views show comes from the last
//! payload of the matching request; the client only keeps ids and toggles.

use std::collections::BTreeSet;

use seqlod_core::aggtree::{ClusterOrder, NodeId};
use seqlod_core::analytics::{ChartType, SequenceSort, Series, StackedBarData};
use seqlod_core::Overview;
use thiserror::Error;

use crate::api::{AggregateRequest, Api, ApiFailure, Level, OverviewRequest, RecordList, SequenceList};
use crate::render::SLIDER_STEP;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UiError {
    #[error("k = {k} outside the slider range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("information threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("`{0}` is not in the current view")]
    NotInView(String),
    #[error("cluster {0} is a single sequence and cannot be split")]
    LeafNotSplittable(NodeId),
    #[error("no chart is shown")]
    NoChart,
    #[error(transparent)]
    Api(#[from] ApiFailure),
}

/// Whether an action reached the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Unchanged,
    Refreshed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    pub k: usize,
    pub itau: f64,
    pub order: ClusterOrder,
    /// Set after a split; overrides `k` until the slider moves again.
    pub frontier: Option<Vec<NodeId>>,
    pub selected_cluster: Option<NodeId>,
    pub selected_unique: Option<String>,
    pub sort: SequenceSort,
    pub anchors: Vec<String>,
    pub chart: Option<(ChartType, String)>,
    pub hidden_series: BTreeSet<String>,
    pub gantt_attributes: Vec<String>,
}

pub struct Client<A: Api> {
    api: A,
    pub state: ViewState,
    pub overview: Overview,
    pub uniques: Option<SequenceList>,
    pub records: Option<RecordList>,
    pub chart: Option<StackedBarData>,
    /// Shown once after a selection was dropped by a level change.
    pub notice: Option<String>,
    /// Last server error, shown inline; state is left as it was.
    pub error: Option<ApiFailure>,
}

impl<A: Api> Client<A> {
    /// Loads the default overview (the top recommended `k`).
    pub fn open(mut api: A) -> Result<Self, ApiFailure> {
        let overview = api.overview(&OverviewRequest {
            level: Level::Default,
            itau: None,
            order: ClusterOrder::Similarity,
        })?;
        let state = ViewState {
            k: overview.k,
            itau: overview.itau,
            order: overview.order,
            frontier: None,
            selected_cluster: None,
            selected_unique: None,
            sort: SequenceSort::Similarity,
            anchors: Vec::new(),
            chart: None,
            hidden_series: BTreeSet::new(),
            gantt_attributes: Vec::new(),
        };
        Ok(Client {
            api,
            state,
            overview,
            uniques: None,
            records: None,
            chart: None,
            notice: None,
            error: None,
        })
    }

    pub fn api(&self) -> &A {
        &self.api
    }

    pub fn k_range(&self) -> (usize, usize) {
        (1, self.overview.n_sequences)
    }

    pub fn recommendations(&self) -> &[usize] {
        &self.overview.recommendations
    }

    pub fn silhouette(&self) -> Option<f64> {
        self.overview.silhouette
    }

    pub fn recommended(&self) -> bool {
        self.overview.recommended
    }

    fn level(&self) -> Level {
        match &self.state.frontier {
            Some(f) => Level::Frontier(f.clone()),
            None => Level::K(self.state.k),
        }
    }

    fn fetch_overview(&mut self, level: Level, itau: f64, order: ClusterOrder) -> Result<Overview, UiError> {
        let req = OverviewRequest {
            level,
            itau: Some(itau),
            order,
        };
        self.api.overview(&req).map_err(|f| {
            self.error = Some(f.clone());
            UiError::Api(f)
        })
    }

    fn accept(&mut self, overview: Overview) -> Result<(), UiError> {
        self.error = None;
        self.overview = overview;
        let surviving: BTreeSet<NodeId> = self.overview.clusters.iter().map(|c| c.node_id).collect();
        if let Some(node) = self.state.selected_cluster {
            if !surviving.contains(&node) {
                self.state.selected_cluster = None;
                self.state.selected_unique = None;
                self.uniques = None;
                self.records = None;
                self.notice = Some(format!("cluster {node} is no longer shown; selection cleared"));
            }
        }
        if matches!(self.state.chart, Some((ChartType::Cluster | ChartType::SelectedData, _))) {
            self.refresh_chart()?;
        }
        Ok(())
    }

    pub fn set_k(&mut self, k: usize) -> Result<Update, UiError> {
        let (lo, hi) = self.k_range();
        if !(lo..=hi).contains(&k) {
            return Err(UiError::KOutOfRange { k, max: hi });
        }
        if k == self.state.k && self.state.frontier.is_none() {
            return Ok(Update::Unchanged);
        }
        let overview = self.fetch_overview(Level::K(k), self.state.itau, self.state.order)?;
        self.state.k = k;
        self.state.frontier = None;
        self.accept(overview)?;
        Ok(Update::Refreshed)
    }

    /// Snaps to the slider step before comparing with the current value.
    pub fn set_information_threshold(&mut self, itau: f64) -> Result<Update, UiError> {
        if !(0.0..=1.0).contains(&itau) {
            return Err(UiError::BadThreshold(itau));
        }
        let snapped = ((itau / SLIDER_STEP).round() * SLIDER_STEP).clamp(0.0, 1.0);
        if snapped == self.state.itau {
            return Ok(Update::Unchanged);
        }
        let overview = self.fetch_overview(self.level(), snapped, self.state.order)?;
        self.state.itau = snapped;
        self.accept(overview)?;
        Ok(Update::Refreshed)
    }

    pub fn set_order(&mut self, order: ClusterOrder) -> Result<Update, UiError> {
        if order == self.state.order {
            return Ok(Update::Unchanged);
        }
        let overview = self.fetch_overview(self.level(), self.state.itau, order)?;
        self.state.order = order;
        self.accept(overview)?;
        Ok(Update::Refreshed)
    }

    /// Leaves carry ids below the number of unique sequences.
    pub fn can_split(&self, node: NodeId) -> bool {
        node >= self.overview.n_sequences && self.overview.clusters.iter().any(|c| c.node_id == node)
    }

    pub fn split(&mut self, node: NodeId) -> Result<Update, UiError> {
        if !self.overview.clusters.iter().any(|c| c.node_id == node) {
            return Err(UiError::NotInView(node.to_string()));
        }
        if !self.can_split(node) {
            return Err(UiError::LeafNotSplittable(node));
        }
        let current: Vec<NodeId> = self.overview.clusters.iter().map(|c| c.node_id).collect();
        let result = self.api.split(&current, node).map_err(|f| {
            self.error = Some(f.clone());
            UiError::Api(f)
        })?;
        let overview = self.fetch_overview(Level::Frontier(result.frontier.clone()), self.state.itau, self.state.order)?;
        self.state.k = result.k;
        self.state.frontier = Some(result.frontier);
        self.accept(overview)?;
        Ok(Update::Refreshed)
    }

    /// Selects a cluster and lists its unique sequences.
    pub fn select_cluster(&mut self, node: NodeId) -> Result<Update, UiError> {
        if !self.overview.clusters.iter().any(|c| c.node_id == node) {
            return Err(UiError::NotInView(node.to_string()));
        }
        if self.state.selected_cluster == Some(node) {
            return Ok(Update::Unchanged);
        }
        let list = self.api.unique_sequences(node, self.state.sort, &self.state.anchors)?;
        self.state.selected_cluster = Some(node);
        self.state.selected_unique = None;
        self.uniques = Some(list);
        self.records = None;
        self.notice = None;
        if matches!(self.state.chart, Some((ChartType::SelectedData | ChartType::Sequence, _))) {
            self.refresh_chart()?;
        }
        Ok(Update::Refreshed)
    }

    fn reload_uniques(&mut self) -> Result<(), UiError> {
        if let Some(node) = self.state.selected_cluster {
            self.uniques = Some(self.api.unique_sequences(node, self.state.sort, &self.state.anchors)?);
        }
        Ok(())
    }

    pub fn set_sort(&mut self, sort: SequenceSort) -> Result<Update, UiError> {
        if sort == self.state.sort {
            return Ok(Update::Unchanged);
        }
        self.state.sort = sort;
        self.reload_uniques()?;
        Ok(Update::Refreshed)
    }

    /// Aligns the unique sequence list on one or two event types.
    pub fn set_anchors(&mut self, anchors: Vec<String>) -> Result<Update, UiError> {
        if anchors == self.state.anchors {
            return Ok(Update::Unchanged);
        }
        self.state.anchors = anchors;
        self.reload_uniques()?;
        Ok(Update::Refreshed)
    }

    /// Loads the individual records of one listed unique sequence.
    pub fn select_unique(&mut self, label: &str) -> Result<Update, UiError> {
        let listed = self
            .uniques
            .as_ref()
            .is_some_and(|l| l.sequences.iter().any(|u| u.label == label));
        if !listed {
            return Err(UiError::NotInView(label.to_owned()));
        }
        let records = self.api.records(label, &self.state.gantt_attributes)?;
        self.state.selected_unique = Some(label.to_owned());
        self.records = Some(records);
        if matches!(self.state.chart, Some((ChartType::Sequence, _))) {
            self.refresh_chart()?;
        }
        Ok(Update::Refreshed)
    }

    pub fn set_gantt_attributes(&mut self, attrs: Vec<String>) -> Result<Update, UiError> {
        if attrs == self.state.gantt_attributes {
            return Ok(Update::Unchanged);
        }
        self.state.gantt_attributes = attrs;
        if let Some(label) = self.state.selected_unique.clone() {
            self.records = Some(self.api.records(&label, &self.state.gantt_attributes)?);
        }
        Ok(Update::Refreshed)
    }

    pub fn show_chart(&mut self, chart: ChartType, attribute: &str) -> Result<Update, UiError> {
        if self.state.chart.as_ref() == Some(&(chart, attribute.to_owned())) {
            return Ok(Update::Unchanged);
        }
        self.state.chart = Some((chart, attribute.to_owned()));
        self.state.hidden_series.clear();
        self.refresh_chart()?;
        Ok(Update::Refreshed)
    }

    fn refresh_chart(&mut self) -> Result<(), UiError> {
        let Some((chart, attribute)) = self.state.chart.clone() else {
            return Ok(());
        };
        let scope = match chart {
            ChartType::Cluster => Vec::new(),
            ChartType::SelectedData => self.state.selected_cluster.iter().map(|n| n.to_string()).collect(),
            ChartType::Sequence => match (&self.state.selected_unique, &self.uniques) {
                (Some(label), _) => vec![label.clone()],
                (None, Some(list)) => list.sequences.iter().map(|u| u.label.clone()).collect(),
                (None, None) => Vec::new(),
            },
        };
        let req = AggregateRequest {
            chart,
            attribute,
            scope,
            level: self.level(),
        };
        let data = self.api.aggregate(&req)?;
        let ids: BTreeSet<&str> = data.series.iter().map(|s| s.id.as_str()).collect();
        self.state.hidden_series.retain(|id| ids.contains(id.as_str()));
        self.chart = Some(data);
        Ok(())
    }

    /// Toggles a chart series without a request.
    pub fn toggle_series(&mut self, id: &str) -> Result<bool, UiError> {
        let chart = self.chart.as_ref().ok_or(UiError::NoChart)?;
        if !chart.series.iter().any(|s| s.id == id) {
            return Err(UiError::NotInView(id.to_owned()));
        }
        let hidden = !self.state.hidden_series.remove(id);
        if hidden {
            self.state.hidden_series.insert(id.to_owned());
        }
        Ok(hidden)
    }

    pub fn visible_series(&self) -> Vec<&Series> {
        self.chart
            .iter()
            .flat_map(|c| &c.series)
            .filter(|s| !self.state.hidden_series.contains(&s.id))
            .collect()
    }

    /// Tallest stacked bar over the visible series; the chart's y range.
    pub fn chart_scale(&self) -> u64 {
        let bins = self.chart.as_ref().map_or(0, |c| c.bins.len());
        (0..bins)
            .map(|b| self.visible_series().iter().map(|s| s.counts[b]).sum::<u64>())
            .max()
            .unwrap_or(0)
    }
}
