//! Built-in test grids.
//!
//! Every catalog branch has admittance `s * y0` with real `s > 0` and
//! `y0 = 1 / (0.02 + 0.04j)`, so all branches share one R/X ratio.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Branch, BusId, GridTopology};

/// Series impedance of a unit-strength branch, p.u.
pub const BASE_IMPEDANCE: Complex64 = Complex64::new(0.02, 0.04);

/// Strength of branch 7-8 and of the two loop branches relative to the rest.
pub const STRONG_BRANCH_SCALE: f64 = 10.0;

const EIGHT_BUS_TREE: [(usize, usize); 7] = [(1, 2), (2, 3), (3, 5), (4, 7), (5, 7), (6, 7), (7, 8)];
const EIGHT_BUS_LOOPS: [(usize, usize); 2] = [(3, 4), (2, 6)];

#[must_use]
pub fn base_admittance() -> Complex64 {
    BASE_IMPEDANCE.inv()
}

fn eight_bus_branch(a: usize, b: usize) -> Branch {
    let strong = (a, b) == (7, 8) || EIGHT_BUS_LOOPS.contains(&(a, b));
    let scale = if strong { STRONG_BRANCH_SCALE } else { 1.0 };
    Branch::new(a, b, base_admittance() * scale)
}

/// Radial 8-bus feeder (the loopy grid without its two loop branches).
#[must_use]
pub fn eight_bus_radial() -> GridTopology {
    let branches = EIGHT_BUS_TREE.iter().map(|&(a, b)| eight_bus_branch(a, b)).collect();
    GridTopology::new(8, BusId(1), branches).expect("catalog grid is valid")
}

/// 8-bus grid with loop branches 3-4 and 2-6, each as strong as branch 7-8.
#[must_use]
pub fn eight_bus_loop() -> GridTopology {
    let branches = EIGHT_BUS_TREE.iter().chain(EIGHT_BUS_LOOPS.iter()).map(|&(a, b)| eight_bus_branch(a, b)).collect();
    GridTopology::new(8, BusId(1), branches).expect("catalog grid is valid")
}

/// The two loop branches of [`eight_bus_loop`].
#[must_use]
pub fn eight_bus_loop_branches() -> Vec<(BusId, BusId)> {
    EIGHT_BUS_LOOPS.iter().map(|&(a, b)| (BusId(a), BusId(b))).collect()
}

/// Chain 1-2-...-m with unit-strength branches.
#[must_use]
pub fn chain(m: usize) -> GridTopology {
    let branches = (1..m).map(|i| Branch::new(i, i + 1, base_admittance())).collect();
    GridTopology::new(m, BusId(1), branches).expect("chain with m >= 2 is valid")
}

/// Random recursive tree: bus `k` attaches to a uniformly chosen earlier bus.
/// Branch strengths are uniform on [0.5, 2].
#[must_use]
pub fn generated_radial(m: usize, seed: u64) -> GridTopology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branches = tree_branches(m, &mut rng);
    GridTopology::new(m, BusId(1), branches).expect("generated tree is valid")
}

/// Random tree plus `loops` extra branches between distinct non-adjacent buses.
#[must_use]
pub fn generated_mesh(m: usize, loops: usize, seed: u64) -> GridTopology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut branches = tree_branches(m, &mut rng);
    let max_loops = m * (m - 1) / 2 - (m - 1);
    let mut added = 0;
    while added < loops.min(max_loops) {
        let a = rng.random_range(1..=m);
        let b = rng.random_range(1..=m);
        let key = if a < b { (a, b) } else { (b, a) };
        if a == b || branches.iter().any(|br: &Branch| br.key() == key) {
            continue;
        }
        branches.push(Branch::new(key.0, key.1, base_admittance() * rng.random_range(0.5..2.0)));
        added += 1;
    }
    GridTopology::new(m, BusId(1), branches).expect("generated mesh is valid")
}

fn tree_branches(m: usize, rng: &mut ChaCha8Rng) -> Vec<Branch> {
    (2..=m)
        .map(|k| {
            let parent = rng.random_range(1..k);
            Branch::new(parent, k, base_admittance() * rng.random_range(0.5..2.0))
        })
        .collect()
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 6] = ["eight-bus-radial", "eight-bus-loop", "radial-20", "mesh-20", "radial-50", "mesh-50"];

/// Catalog grid by name. Generated grids use fixed seeds.
#[must_use]
pub fn by_name(name: &str) -> Option<GridTopology> {
    Some(match name {
        "eight-bus-radial" => eight_bus_radial(),
        "eight-bus-loop" => eight_bus_loop(),
        "radial-20" => generated_radial(20, 20),
        "mesh-20" => generated_mesh(20, 5, 20),
        "radial-50" => generated_radial(50, 50),
        "mesh-50" => generated_mesh(50, 10, 50),
        _ => return None,
    })
}

/// Every catalog grid with its name.
#[must_use]
pub fn all() -> Vec<(&'static str, GridTopology)> {
    NAMES.iter().map(|&n| (n, by_name(n).expect("listed name"))).collect()
}
