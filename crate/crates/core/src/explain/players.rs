use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Window, WindowSchema};
use crate::predict::InputShape;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One player per `feature@day` cell.
    Cell,
    /// One player per feature series.
    Feature,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Cell => "cell",
            Granularity::Feature => "feature",
        })
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(Granularity::Cell),
            "feature" => Ok(Granularity::Feature),
            _ => Err(Error::InvalidArgument(format!("unknown granularity `{s}` (cell|feature)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    pub name: String,
    /// Flat cell indices (`feature * L + day`).
    pub cells: Vec<usize>,
}

/// Partition of the N×L cells into players.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerScheme {
    granularity: Granularity,
    grouped: bool,
    shape: InputShape,
    players: Vec<Player>,
}

impl PlayerScheme {
    /// Ungrouped scheme over an anonymous shape; players are named `f<i>@<day>` or `f<i>`.
    pub fn plain(shape: InputShape, granularity: Granularity) -> Self {
        let names: Vec<String> = (0..shape.n_features).map(|i| format!("f{i}")).collect();
        Self::build(shape, granularity, &names, &[])
    }

    /// With `fuse_groups`, each one-hot group moves as one unit (per day for
    /// cell granularity).
    pub fn from_schema(schema: &WindowSchema, granularity: Granularity, fuse_groups: bool) -> Self {
        let shape = InputShape::new(schema.n_features(), schema.window_length());
        let groups = if fuse_groups { schema.groups() } else { Vec::new() };
        let mut scheme = Self::build(shape, granularity, &schema.feature_names(), &groups);
        scheme.grouped = fuse_groups;
        scheme
    }

    fn build(shape: InputShape, granularity: Granularity, names: &[String], groups: &[(String, Vec<usize>)]) -> Self {
        let l = shape.window_length;
        // units: each is a (label, member features) pair, placed at its first member
        let mut units: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, name) in names.iter().enumerate() {
            match groups.iter().find(|(_, m)| m.contains(&i)) {
                Some((g, members)) if members[0] == i => units.push((g.clone(), members.clone())),
                Some(_) => {}
                None => units.push((name.clone(), vec![i])),
            }
        }
        let mut players = Vec::new();
        for (label, members) in units {
            match granularity {
                Granularity::Feature => players.push(Player {
                    name: label,
                    cells: members.iter().flat_map(|&f| (0..l).map(move |t| f * l + t)).collect(),
                }),
                Granularity::Cell => {
                    for t in 0..l {
                        players.push(Player {
                            name: format!("{label}@{}", t + 1),
                            cells: members.iter().map(|&f| f * l + t).collect(),
                        });
                    }
                }
            }
        }
        Self {
            granularity,
            grouped: !groups.is_empty(),
            shape,
            players,
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn grouped(&self) -> bool {
        self.grouped
    }

    pub fn shape(&self) -> InputShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    /// Spreads each player's value equally over its cells.
    pub fn expand(&self, values: &[f64]) -> Window {
        assert_eq!(values.len(), self.players.len());
        let mut out = vec![0.0; self.shape.columns()];
        for (p, &v) in self.players.iter().zip(values) {
            let share = v / p.cells.len() as f64;
            for &c in &p.cells {
                out[c] = share;
            }
        }
        Window::new(self.shape.n_features, self.shape.window_length, out).expect("shape")
    }

    /// Inverse of [`expand`](Self::expand): sums each player's cells.
    pub fn collapse(&self, window: &Window) -> Vec<f64> {
        let cells = window.as_slice();
        self.players.iter().map(|p| p.cells.iter().map(|&c| cells[c]).sum()).collect()
    }
}
