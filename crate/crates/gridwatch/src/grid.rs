//! Grid topology, admittance matrix construction and outage application.
//!
//! Buses are numbered from 1. The stored admittance matrix uses the
//! injection form `dI_i = dV_i Y_ii - sum_e dV_e Y_ie`: off-diagonals hold the
//! positive branch admittance and diagonals the sum over incident branches.
//! [`AdmittanceMatrix::nodal`] converts to the usual nodal matrix with negated
//! off-diagonals.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GridwatchError, Result};

pub mod catalog;

/// 1-based bus number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

impl BusId {
    /// 0-based position in bus-indexed vectors and matrices.
    #[must_use]
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for BusId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub admittance: Complex64,
    pub in_service: bool,
}

impl Branch {
    #[must_use]
    pub fn new(from: usize, to: usize, admittance: Complex64) -> Self {
        Self { from: BusId(from), to: BusId(to), admittance, in_service: true }
    }

    /// Unordered pair key with the smaller bus first.
    #[must_use]
    pub fn key(&self) -> (usize, usize) {
        pair_key(self.from.0, self.to.0)
    }
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Validated grid: `M >= 2`, connected when every branch is in service, one
/// branch per unordered bus pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridTopology {
    bus_count: usize,
    branches: Vec<Branch>,
    slack: BusId,
}

impl GridTopology {
    /// Validates the branch list and merges parallel branches by summing
    /// admittances. A pair listed both in and out of service is rejected.
    pub fn new(bus_count: usize, slack: BusId, branches: Vec<Branch>) -> Result<Self> {
        if bus_count < 2 {
            return Err(GridwatchError::InvalidInput(format!("grid needs at least 2 buses, got {bus_count}")));
        }
        if slack.0 == 0 || slack.0 > bus_count {
            return Err(GridwatchError::InvalidInput(format!("slack bus {slack} out of range")));
        }
        let mut merged: BTreeMap<(usize, usize), Branch> = BTreeMap::new();
        for b in branches {
            if b.from.0 == 0 || b.to.0 == 0 || b.from.0 > bus_count || b.to.0 > bus_count {
                return Err(GridwatchError::InvalidInput(format!(
                    "branch {}-{} references a missing bus",
                    b.from, b.to
                )));
            }
            if b.from == b.to {
                return Err(GridwatchError::InvalidInput(format!("branch {}-{} is a self loop", b.from, b.to)));
            }
            if !(b.admittance.re.is_finite() && b.admittance.im.is_finite()) {
                return Err(GridwatchError::InvalidInput(format!(
                    "branch {}-{} has non-finite admittance",
                    b.from, b.to
                )));
            }
            let key = b.key();
            match merged.get_mut(&key) {
                None => {
                    merged.insert(key, b);
                }
                Some(existing) if existing.in_service == b.in_service => {
                    existing.admittance += b.admittance;
                }
                Some(_) => return Err(GridwatchError::DuplicateBranch(key.0, key.1)),
            }
        }
        for b in merged.values() {
            if b.in_service && b.admittance == Complex64::new(0.0, 0.0) {
                return Err(GridwatchError::InvalidInput(format!(
                    "in-service branch {}-{} has zero admittance",
                    b.from, b.to
                )));
            }
        }
        let topo = Self { bus_count, branches: merged.into_values().collect(), slack };
        if components_of(bus_count, topo.branches.iter().map(Branch::key)).len() != 1 {
            return Err(GridwatchError::InvalidInput("grid is not connected".into()));
        }
        Ok(topo)
    }

    #[must_use]
    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    #[must_use]
    pub fn slack(&self) -> BusId {
        self.slack
    }

    #[must_use]
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Branch joining `a` and `b` in either orientation.
    #[must_use]
    pub fn branch(&self, a: BusId, b: BusId) -> Option<&Branch> {
        let key = pair_key(a.0, b.0);
        self.branches.iter().find(|br| br.key() == key)
    }

    pub fn in_service(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.in_service)
    }

    /// Connected components of the in-service graph, each sorted, ordered by
    /// smallest bus.
    #[must_use]
    pub fn components(&self) -> Vec<Vec<BusId>> {
        components_of(self.bus_count, self.in_service().map(Branch::key))
    }

    /// Non-slack buses, in bus order.
    #[must_use]
    pub fn non_slack(&self) -> Vec<BusId> {
        (1..=self.bus_count).map(BusId).filter(|&b| b != self.slack).collect()
    }

    /// Position of a non-slack bus among [`GridTopology::non_slack`].
    #[must_use]
    pub fn channel(&self, bus: BusId) -> Option<usize> {
        match bus.0.cmp(&self.slack.0) {
            std::cmp::Ordering::Less => Some(bus.index()),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(bus.index() - 1),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(s)?;
        file.into_topology()
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    #[must_use]
    pub fn to_json_string(&self) -> String {
        let file = GridFile {
            format: GRID_FORMAT.to_string(),
            buses: self.bus_count,
            slack: self.slack.0,
            branches: self
                .branches
                .iter()
                .map(|b| BranchFile {
                    from: b.from.0,
                    to: b.to.0,
                    g: b.admittance.re,
                    b: b.admittance.im,
                    in_service: b.in_service,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("grid serializes")
    }
}

fn components_of(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<BusId>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a - 1), find(&mut parent, b - 1));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<BusId>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(BusId(i + 1));
    }
    groups.into_values().collect()
}

// ---------------------------------------------------------------------------
// JSON grid format
// ---------------------------------------------------------------------------

pub const GRID_FORMAT: &str = "gridwatch-grid-v1";

#[derive(Debug, Serialize, Deserialize)]
struct GridFile {
    format: String,
    buses: usize,
    slack: usize,
    branches: Vec<BranchFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchFile {
    from: usize,
    to: usize,
    g: f64,
    b: f64,
    #[serde(default = "default_true")]
    in_service: bool,
}

fn default_true() -> bool {
    true
}

impl GridFile {
    fn into_topology(self) -> Result<GridTopology> {
        if self.format != GRID_FORMAT {
            return Err(GridwatchError::InvalidInput(format!(
                "unsupported grid format {:?}, expected {GRID_FORMAT:?}",
                self.format
            )));
        }
        let branches = self
            .branches
            .into_iter()
            .map(|b| Branch {
                from: BusId(b.from),
                to: BusId(b.to),
                admittance: Complex64::new(b.g, b.b),
                in_service: b.in_service,
            })
            .collect();
        GridTopology::new(self.buses, BusId(self.slack), branches)
    }
}

// ---------------------------------------------------------------------------
// Admittance matrix
// ---------------------------------------------------------------------------

pub const SIGN_CONVENTION: &str =
    "dI_i = dV_i*Y_ii - sum_e dV_e*Y_ie; Y_ie = +branch admittance, Y_ii = sum of incident Y_ie";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmittanceMatrix {
    pub convention: &'static str,
    y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    /// Matrix in the injection form (positive off-diagonals).
    #[must_use]
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    #[must_use]
    pub fn get(&self, i: BusId, k: BusId) -> Complex64 {
        self.y[(i.index(), k.index())]
    }

    /// Standard nodal matrix: same diagonal, negated off-diagonals.
    #[must_use]
    pub fn nodal(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, k| if i == k { self.y[(i, k)] } else { -self.y[(i, k)] })
    }

    /// Inverse of [`AdmittanceMatrix::nodal`].
    #[must_use]
    pub fn from_nodal(nodal: &DMatrix<Complex64>) -> Self {
        let n = nodal.nrows();
        let y = DMatrix::from_fn(n, n, |i, k| if i == k { nodal[(i, k)] } else { -nodal[(i, k)] });
        Self { convention: SIGN_CONVENTION, y }
    }
}

pub fn build_admittance(topology: &GridTopology) -> Result<AdmittanceMatrix> {
    let n = topology.bus_count();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut seen = std::collections::BTreeSet::new();
    for b in topology.branches() {
        if !seen.insert(b.key()) {
            return Err(GridwatchError::DuplicateBranch(b.key().0, b.key().1));
        }
        if !b.in_service {
            continue;
        }
        let (i, k) = (b.from.index(), b.to.index());
        y[(i, k)] += b.admittance;
        y[(k, i)] += b.admittance;
        y[(i, i)] += b.admittance;
        y[(k, k)] += b.admittance;
    }
    Ok(AdmittanceMatrix { convention: SIGN_CONVENTION, y })
}

/// Marks each listed branch out of service. An empty list returns a clone.
pub fn apply_outage(topology: &GridTopology, branch_pairs: &[(BusId, BusId)]) -> Result<GridTopology> {
    let mut out = topology.clone();
    for &(a, b) in branch_pairs {
        let key = pair_key(a.0, b.0);
        match out.branches.iter_mut().find(|br| br.key() == key && br.in_service) {
            Some(br) => br.in_service = false,
            None => return Err(GridwatchError::UnknownBranch(key.0, key.1)),
        }
    }
    Ok(out)
}

/// Nodal matrix with the slack row and column removed. Fails with the bus list
/// of any component that does not contain the slack bus.
pub fn reduced_admittance(y: &AdmittanceMatrix, slack: BusId) -> Result<DMatrix<Complex64>> {
    let n = y.dim();
    if slack.0 == 0 || slack.0 > n {
        return Err(GridwatchError::InvalidInput(format!("slack bus {slack} out of range")));
    }
    let m = y.matrix();
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |k| (i, k)))
        .filter(|&(i, k)| m[(i, k)] != Complex64::new(0.0, 0.0))
        .map(|(i, k)| (i + 1, k + 1));
    let dead: Vec<usize> =
        components_of(n, edges).into_iter().filter(|c| !c.contains(&slack)).flatten().map(|b| b.0).collect();
    if !dead.is_empty() {
        return Err(GridwatchError::DeadIsland(dead));
    }
    Ok(y.nodal().remove_row(slack.index()).remove_column(slack.index()))
}
