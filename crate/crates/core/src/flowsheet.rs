//! The growing tree of placed columns and terminal streams, with JSON and
//! DOT (block-flow diagram) exports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::column::ColumnSpec;
use crate::thermo::{Stream, ATM};

#[derive(Debug, Error)]
pub enum FlowsheetError {
    #[error("episode is not finished; flowsheet still has open streams")]
    EpisodeUnfinished,
    #[error("malformed flowsheet: {0}")]
    Malformed(String),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// How a leaf stream left the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafLabel {
    /// Met the purity spec and was sold.
    Product,
    /// Left the process unsold (declined, failed, or episode cut off).
    Outlet,
    /// Numerically empty stream.
    Negligible,
    /// Still awaiting a decision (only during an episode).
    Open,
}

/// Compact record of a converged column solve kept on the tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub condenser_duty: f64,
    pub reboiler_duty: f64,
    pub condenser_temperature: f64,
    pub reboiler_temperature: f64,
    pub max_vapor_flow: f64,
    pub iterations: usize,
    pub diameter: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowNode {
    Column {
        /// 1-based placement order, for display.
        index: usize,
        feed: Stream,
        spec: ColumnSpec,
        summary: ColumnSummary,
        tac_usd_per_yr: f64,
        revenue_usd_per_yr: f64,
        reward: f64,
        tops: usize,
        bottoms: usize,
    },
    Leaf {
        stream: Stream,
        label: LeafLabel,
        /// Nonzero only for failure outlets, which carry the penalty.
        #[serde(default)]
        reward: f64,
    },
}

/// Tree of placed columns; node 0 is the root (fed by the process feed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Flowsheet {
    pub component_names: Vec<String>,
    pub nodes: Vec<FlowNode>,
    pub root: usize,
    pub episode_return: f64,
    pub total_revenue_usd_per_yr: f64,
    pub total_tac_usd_per_yr: f64,
}

impl Flowsheet {
    pub fn new(component_names: Vec<String>, feed: Stream) -> Self {
        Flowsheet {
            component_names,
            nodes: vec![FlowNode::Leaf { stream: feed, label: LeafLabel::Open, reward: 0.0 }],
            root: 0,
            episode_return: 0.0,
            total_revenue_usd_per_yr: 0.0,
            total_tac_usd_per_yr: 0.0,
        }
    }

    pub fn has_open_leaves(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, FlowNode::Leaf { label: LeafLabel::Open, .. }))
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&Stream, LeafLabel)> {
        self.nodes.iter().filter_map(|n| match n {
            FlowNode::Leaf { stream, label, .. } => Some((stream, *label)),
            FlowNode::Column { .. } => None,
        })
    }

    pub fn columns_placed(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, FlowNode::Column { .. }))
            .count()
    }

    /// Replace leaf `node` with a column and two fresh open/terminal
    /// children. Returns (tops_id, bottoms_id).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn place_column(
        &mut self,
        node: usize,
        index: usize,
        spec: ColumnSpec,
        summary: ColumnSummary,
        tac: f64,
        revenue: f64,
        reward: f64,
        tops: (Stream, LeafLabel),
        bottoms: (Stream, LeafLabel),
    ) -> (usize, usize) {
        let feed = match &self.nodes[node] {
            FlowNode::Leaf { stream, .. } => stream.clone(),
            FlowNode::Column { .. } => panic!("placing a column on a non-leaf node"),
        };
        let tops_id = self.nodes.len();
        self.nodes.push(FlowNode::Leaf { stream: tops.0, label: tops.1, reward: 0.0 });
        let bottoms_id = self.nodes.len();
        self.nodes.push(FlowNode::Leaf { stream: bottoms.0, label: bottoms.1, reward: 0.0 });
        self.nodes[node] = FlowNode::Column {
            index,
            feed,
            spec,
            summary,
            tac_usd_per_yr: tac,
            revenue_usd_per_yr: revenue,
            reward,
            tops: tops_id,
            bottoms: bottoms_id,
        };
        (tops_id, bottoms_id)
    }

    pub(crate) fn set_leaf_label(&mut self, node: usize, label: LeafLabel) {
        match &mut self.nodes[node] {
            FlowNode::Leaf { label: l, .. } => *l = label,
            FlowNode::Column { .. } => panic!("labeling a non-leaf node"),
        }
    }

    pub(crate) fn set_leaf_reward(&mut self, node: usize, reward: f64) {
        match &mut self.nodes[node] {
            FlowNode::Leaf { reward: r, .. } => *r = reward,
            FlowNode::Column { .. } => panic!("rewarding a non-leaf node"),
        }
    }

    /// Sum of per-node rewards over the tree; equals the episode return
    /// when every step came from this flowsheet.
    pub fn tree_reward_sum(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| match n {
                FlowNode::Column { reward, .. } => *reward,
                FlowNode::Leaf { reward, .. } => *reward,
            })
            .sum()
    }

    /// Per-component sum over leaf streams.
    pub fn leaf_flow_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.component_names.len()];
        for (stream, _) in self.leaves() {
            for (t, f) in totals.iter_mut().zip(&stream.flows) {
                *t += f;
            }
        }
        totals
    }

    pub fn to_json(&self) -> Result<String, FlowsheetError> {
        if self.has_open_leaves() {
            return Err(FlowsheetError::EpisodeUnfinished);
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Flowsheet, FlowsheetError> {
        let fs: Flowsheet = serde_json::from_str(text)?;
        for (i, node) in fs.nodes.iter().enumerate() {
            if let FlowNode::Column { tops, bottoms, .. } = node {
                if *tops >= fs.nodes.len() || *bottoms >= fs.nodes.len() {
                    return Err(FlowsheetError::Malformed(format!(
                        "node {i} points past the node table"
                    )));
                }
            }
        }
        if fs.root >= fs.nodes.len() {
            return Err(FlowsheetError::Malformed("root points past the node table".into()));
        }
        Ok(fs)
    }

    /// DOT rendering: one record box per column, one ellipse per leaf,
    /// plus the feed edge.
    pub fn to_dot(&self) -> Result<String, FlowsheetError> {
        if self.has_open_leaves() {
            return Err(FlowsheetError::EpisodeUnfinished);
        }
        let mut out = String::from("digraph flowsheet {\n  rankdir=LR;\n");
        out.push_str("  feed [shape=plaintext, label=\"FEED\"];\n");
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                FlowNode::Column { index, spec, .. } => {
                    out.push_str(&format!(
                        "  n{id} [shape=record, label=\"COL {index} | {:.2} atm | N={} | R={:.2} | s={:.2}\"];\n",
                        spec.pressure / ATM,
                        spec.n_stages,
                        spec.reflux_ratio,
                        spec.boilup_ratio,
                    ));
                }
                FlowNode::Leaf { stream, label, .. } => {
                    let total = stream.total_flow();
                    let (name, purity) = self.majority(stream);
                    let kind = match label {
                        LeafLabel::Product => "product",
                        LeafLabel::Outlet => "outlet",
                        LeafLabel::Negligible => "negligible",
                        LeafLabel::Open => "open",
                    };
                    out.push_str(&format!(
                        "  n{id} [shape=ellipse, label=\"{kind}: {name} {purity:.3} | {total:.3} mol/s\"];\n",
                    ));
                }
            }
        }
        out.push_str(&format!("  feed -> n{};\n", self.root));
        for (id, node) in self.nodes.iter().enumerate() {
            if let FlowNode::Column { tops, bottoms, .. } = node {
                out.push_str(&format!("  n{id} -> n{tops};\n"));
                out.push_str(&format!("  n{id} -> n{bottoms};\n"));
            }
        }
        out.push_str("}\n");
        Ok(out)
    }

    fn majority(&self, stream: &Stream) -> (String, f64) {
        match stream.mole_fractions() {
            Some(fr) => {
                let (i, &f) = fr
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                    .unwrap();
                (self.component_names[i].clone(), f)
            }
            None => ("empty".to_string(), 0.0),
        }
    }
}
