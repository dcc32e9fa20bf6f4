//! Column catalog of the scheduling MILP.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{Network, NodeKind};

/// Column kinds in layout order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Head of a calculated node.
    Hc,
    /// Tank head at the end of a step.
    Ht,
    QPipe,
    QPump,
    SPump,
    PPump,
    /// Pump status (binary).
    NPump,
    /// Pipe segment flow.
    Ww,
    /// Pipe segment selector (binary).
    Bb,
    /// Pump domain flow.
    Qq,
    /// Pump domain speed.
    Ss,
    /// Pump domain selector (binary).
    Aa,
}

impl VarKind {
    pub const ALL: [VarKind; 12] = [
        VarKind::Hc,
        VarKind::Ht,
        VarKind::QPipe,
        VarKind::QPump,
        VarKind::SPump,
        VarKind::PPump,
        VarKind::NPump,
        VarKind::Ww,
        VarKind::Bb,
        VarKind::Qq,
        VarKind::Ss,
        VarKind::Aa,
    ];

    pub fn is_integer(self) -> bool {
        matches!(self, VarKind::NPump | VarKind::Bb | VarKind::Aa)
    }

    pub fn segments(self) -> usize {
        match self {
            VarKind::Ww | VarKind::Bb => 3,
            VarKind::Qq | VarKind::Ss | VarKind::Aa => 4,
            _ => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VarKind::Hc => "hc",
            VarKind::Ht => "ht",
            VarKind::QPipe => "q",
            VarKind::QPump => "qp",
            VarKind::SPump => "s",
            VarKind::PPump => "P",
            VarKind::NPump => "n",
            VarKind::Ww => "ww",
            VarKind::Bb => "BB",
            VarKind::Qq => "qq",
            VarKind::Ss => "ss",
            VarKind::Aa => "AA",
        }
    }
}

/// `(kind, element, segment, k)`. `element` indexes calculated nodes,
/// tanks, pipes or individual pumps depending on the kind; `segment` is 0
/// for kinds without segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarKey {
    pub kind: VarKind,
    pub element: usize,
    pub segment: usize,
    pub k: usize,
}

/// An individual pump: unit `unit` (0-based) of group `group`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PumpUnit {
    pub group: usize,
    pub unit: usize,
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub horizon: usize,
    /// Ids of calculated nodes, tanks, pipes and pumps as used by the keys.
    pub calc_ids: Vec<String>,
    pub tank_ids: Vec<String>,
    pub pipe_ids: Vec<String>,
    pub pumps: Vec<PumpUnit>,
    keys: Vec<VarKey>,
    #[serde(skip)]
    index: HashMap<VarKey, usize>,
}

impl VariableLayout {
    pub fn new(network: &Network) -> VariableLayout {
        let nodes = network.nodes();
        let calc_ids: Vec<String> = network
            .calculated_nodes()
            .iter()
            .map(|&n| nodes[n].id.clone())
            .collect();
        debug_assert!(network
            .calculated_nodes()
            .iter()
            .all(|&n| !matches!(nodes[n].kind, NodeKind::Reservoir | NodeKind::Tank)));
        let tank_ids = network.tanks().iter().map(|t| t.node.clone()).collect();
        let pipe_ids = network.pipes().iter().map(|p| p.id.clone()).collect();
        let pumps = network
            .pump_groups()
            .iter()
            .enumerate()
            .flat_map(|(g, group)| {
                (0..group.n_pumps as usize).map(move |unit| PumpUnit {
                    group: g,
                    unit,
                    id: format!("{}#{}", group.id, unit + 1),
                })
            })
            .collect();
        let mut layout = VariableLayout {
            horizon: network.horizon(),
            calc_ids,
            tank_ids,
            pipe_ids,
            pumps,
            keys: Vec::new(),
            index: HashMap::new(),
        };
        for kind in VarKind::ALL {
            for element in 0..layout.element_count(kind) {
                for segment in 0..kind.segments() {
                    for k in 0..layout.horizon {
                        layout.keys.push(VarKey { kind, element, segment, k });
                    }
                }
            }
        }
        layout.rebuild_index();
        layout
    }

    fn rebuild_index(&mut self) {
        self.index = self.keys.iter().enumerate().map(|(i, key)| (*key, i)).collect();
    }

    /// Restore the lookup table after deserialization.
    pub fn with_index(mut self) -> VariableLayout {
        self.rebuild_index();
        self
    }

    pub fn element_count(&self, kind: VarKind) -> usize {
        match kind {
            VarKind::Hc => self.calc_ids.len(),
            VarKind::Ht => self.tank_ids.len(),
            VarKind::QPipe | VarKind::Ww | VarKind::Bb => self.pipe_ids.len(),
            _ => self.pumps.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, col: usize) -> VarKey {
        self.keys[col]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    pub fn try_index(&self, key: VarKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn index(&self, kind: VarKind, element: usize, segment: usize, k: usize) -> usize {
        let key = VarKey { kind, element, segment, k };
        self.try_index(key).unwrap_or_else(|| panic!("no column for {key:?}"))
    }

    pub fn element_id(&self, kind: VarKind, element: usize) -> &str {
        match kind {
            VarKind::Hc => &self.calc_ids[element],
            VarKind::Ht => &self.tank_ids[element],
            VarKind::QPipe | VarKind::Ww | VarKind::Bb => &self.pipe_ids[element],
            _ => &self.pumps[element].id,
        }
    }

    /// Column name `kind.element[.segment].k`, segments and steps 1-based.
    pub fn name(&self, col: usize) -> String {
        let key = self.keys[col];
        let id = self.element_id(key.kind, key.element);
        if key.kind.segments() > 1 {
            format!("{}.{}.{}.{}", key.kind.label(), id, key.segment + 1, key.k + 1)
        } else {
            format!("{}.{}.{}", key.kind.label(), id, key.k + 1)
        }
    }

    pub fn integer_columns(&self) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.keys[c].kind.is_integer()).collect()
    }

    /// Pumps of group `g`, in unit order.
    pub fn group_pumps(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        self.pumps.iter().enumerate().filter(move |(_, p)| p.group == g).map(|(j, _)| j)
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}, {}, {}]", self.kind.label(), self.element, self.segment, self.k)
    }
}
