mod common;

use common::*;
use gridwatch::grid::{apply_outage, catalog, BusId, GridTopology};
use gridwatch::localize::{
    conditional_corr, conditional_cov, localize, partial_correlations, real_part_block, write_heatmap_csv,
    ConditionalCovariance, CovarianceSource, LocalizationReport, LocalizeOptions,
};
use gridwatch::simulate::{InjectionModel, Mode, OutageScenario, OutageTime, Regimes, ScenarioKind};
use nalgebra::{DMatrix, Matrix2};
use proptest::prelude::*;

fn labels(topo: &GridTopology) -> Vec<usize> {
    topo.non_slack().iter().map(|b| b.0).collect()
}

fn true_covariances(topo: &GridTopology, scenario: &OutageScenario) -> (DMatrix<f64>, DMatrix<f64>) {
    let model = InjectionModel::uniform(topo.bus_count() - 1, 1e-6).unwrap();
    let r = Regimes::new(topo, scenario, 1).unwrap();
    (
        real_part_block(r.pre_model(&model, Mode::Complex).unwrap().cov()),
        real_part_block(r.post_model(&model, Mode::Complex).unwrap().cov()),
    )
}

fn opts(topo: &GridTopology) -> LocalizeOptions {
    LocalizeOptions { labels: Some(labels(topo)), ..LocalizeOptions::default() }
}

#[test]
fn diagonal_covariance_has_no_partial_correlation() {
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
    let (rho, dead) = partial_correlations(&sigma).unwrap();
    assert_eq!(rho, DMatrix::identity(4, 4));
    assert!(dead.iter().all(|d| !d));
    let cc = conditional_cov(&sigma, (3, 1), CovarianceSource::Sigma0).unwrap();
    assert_eq!(cc.pair, (1, 3));
    assert_eq!(cc.matrix, Matrix2::new(2.0, 0.0, 0.0, 4.0));
    let rep = localize(&sigma, &sigma, &LocalizeOptions::default()).unwrap();
    assert!(rep.candidates.is_empty());
    assert_eq!(rep.pairs.len(), 6);
    assert_eq!(rep.post_groups.len(), 4);
}

#[test]
fn three_channel_schur_complement() {
    let sigma = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 1.0, 2.0, 3.0, 0.5, 1.0, 0.5, 2.0]);
    let cc = conditional_cov(&sigma, (0, 1), CovarianceSource::TrueSigma1).unwrap();
    // S_II - s s^T / s_22 with s = (1, 0.5).
    let expected = Matrix2::new(4.0 - 0.5, 2.0 - 0.25, 2.0 - 0.25, 3.0 - 0.125);
    assert!((cc.matrix - expected).amax() < 1e-15);
    let rho = conditional_corr(&cc).rho;
    assert!((rho - 1.75 / (3.5_f64 * 2.875).sqrt()).abs() < 1e-15);
    let (all, _) = partial_correlations(&sigma).unwrap();
    assert!((all[(0, 1)] - rho).abs() < 1e-14);

    assert!(conditional_cov(&sigma, (1, 1), CovarianceSource::Sigma0).is_err());
    assert!(conditional_cov(&sigma, (0, 3), CovarianceSource::Sigma0).is_err());
    assert!(conditional_cov(&DMatrix::zeros(2, 3), (0, 1), CovarianceSource::Sigma0).is_err());
}

#[test]
fn conditional_correlation_examples() {
    let cc = |m: Matrix2<f64>| ConditionalCovariance { pair: (0, 1), matrix: m, source: CovarianceSource::Sigma0 };
    assert_eq!(conditional_corr(&cc(Matrix2::new(1.0, 0.5, 0.5, 1.0))).rho, 0.5);
    assert!((conditional_corr(&cc(Matrix2::new(4.0, -2.0, -2.0, 9.0))).rho + 1.0 / 3.0).abs() < 1e-15);
    let dead = conditional_corr(&cc(Matrix2::new(0.0, 0.0, 0.0, 1.0)));
    assert!(dead.dead && dead.rho == 0.0);
}

#[test]
fn unchanged_covariance_gives_no_candidates() {
    let topo = catalog::eight_bus_loop();
    let (s0, _) = true_covariances(&topo, &OutageScenario::new(OutageTime::At(1), vec![], ScenarioKind::Mesh));
    let rep = localize(&s0, &s0, &opts(&topo)).unwrap();
    assert!(rep.candidates.is_empty());
    assert_eq!(rep.post_groups, vec![labels(&topo)]);
    assert!(rep.dead_buses.is_empty());
}

#[test]
fn loop_outage_is_localized_from_true_covariances() {
    let topo = catalog::eight_bus_loop();
    let s = OutageScenario::new(OutageTime::At(1), catalog::eight_bus_loop_branches(), ScenarioKind::Mesh);
    let (s0, s1) = true_covariances(&topo, &s);
    let rep = localize(&s0, &s1, &opts(&topo)).unwrap();
    assert_eq!(rep.candidates, vec![(2, 6), (3, 4)]);
    assert_eq!(rep.ranking[0], (2, 6));
    assert_eq!(rep.pairs.len(), 21);
    let p26 = rep.pairs.iter().find(|p| (p.bus_i, p.bus_j) == (2, 6)).unwrap();
    assert!(p26.rho_pre > 0.9 && p26.rho_post.abs() < 1e-8);
}

#[test]
fn dead_island_channels_are_flagged() {
    let topo = catalog::eight_bus_radial();
    let s = OutageScenario::new(OutageTime::At(1), vec![(BusId(3), BusId(5))], ScenarioKind::RadialDeadIsland);
    let (s0, s1) = true_covariances(&topo, &s);
    let rep = localize(&s0, &s1, &opts(&topo)).unwrap();
    assert_eq!(rep.dead_buses, vec![4, 5, 6, 7, 8]);
    assert!(rep.pairs.iter().filter(|p| p.bus_j >= 4).all(|p| p.dead && p.rho_post == 0.0));
    assert_eq!(rep.post_groups[0], vec![2, 3]);
}

#[test]
fn der_island_splits_post_change_groups() {
    let topo = catalog::eight_bus_radial();
    let mut s = OutageScenario::new(OutageTime::At(1), vec![(BusId(3), BusId(5))], ScenarioKind::RadialWithDer);
    s.der_buses = vec![BusId(7)];
    let (s0, s1) = true_covariances(&topo, &s);
    let rep = localize(&s0, &s1, &opts(&topo)).unwrap();
    assert!(rep.dead_buses.is_empty());
    assert_eq!(rep.post_groups, vec![vec![2, 3], vec![4, 5, 6, 7, 8]]);
    assert_eq!(rep.candidates[0], (3, 5));
}

#[test]
fn report_outputs() {
    let topo = catalog::eight_bus_loop();
    let s = OutageScenario::new(OutageTime::At(1), catalog::eight_bus_loop_branches(), ScenarioKind::Mesh);
    let (s0, s1) = true_covariances(&topo, &s);
    let rep = localize(&s0, &s1, &opts(&topo)).unwrap();
    let mut buf = Vec::new();
    write_heatmap_csv(&rep, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bus_i,bus_j,abs_rho_pre,abs_rho_post");
    assert_eq!(lines.len(), 22);
    assert!(lines[1].starts_with("2,3,"));
    let json = serde_json::to_string(&rep).unwrap();
    let back: LocalizationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
    assert!(json.contains(r#""source":{"kind":"true_sigma1"}"#));
    let est = serde_json::to_string(&CovarianceSource::EstimatedSigma1 { samples: 30 }).unwrap();
    assert_eq!(est, r#"{"kind":"estimated_sigma1","samples":30}"#);
    assert!(localize(&s0, &DMatrix::identity(3, 3), &opts(&topo)).is_err());
    let bad = LocalizeOptions { labels: Some(vec![1, 2]), ..LocalizeOptions::default() };
    assert!(localize(&s0, &s1, &bad).is_err());
}

/// Loop branches of a mesh whose removal keeps the grid connected.
fn removable(topo: &GridTopology) -> Vec<(BusId, BusId)> {
    topo.branches()
        .iter()
        .map(|b| (b.from, b.to))
        .filter(|&(a, b)| apply_outage(topo, &[(a, b)]).is_ok_and(|t| t.components().len() == 1))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schur_route_matches_precision_route(seed in 0u64..10_000, n in 2usize..9) {
        let mut r = rng(seed);
        let sigma = random_spd(&mut r, n, 0.2);
        let (rho, _) = partial_correlations(&sigma).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let cc = conditional_cov(&sigma, (i, j), CovarianceSource::Sigma0).unwrap();
                // Schur identity: the pair block of the precision inverts the conditional covariance.
                let p = sigma.clone().try_inverse().unwrap();
                let block = Matrix2::new(p[(i, i)], p[(i, j)], p[(j, i)], p[(j, j)]).try_inverse().unwrap();
                prop_assert!((cc.matrix - block).amax() <= 1e-9 * block.amax());
                prop_assert!((conditional_corr(&cc).rho - rho[(i, j)]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn removed_branch_decorrelates_without_shared_neighbour(m in 8usize..20, loops in 2usize..6, seed in 0u64..500) {
        let topo = catalog::generated_mesh(m, loops, seed);
        for (a, b) in removable(&topo) {
            if a == topo.slack() || b == topo.slack() {
                continue;
            }
            let post = apply_outage(&topo, &[(a, b)]).unwrap();
            if common_non_slack_neighbour(&post, a, b) {
                continue;
            }
            let s = OutageScenario::new(OutageTime::At(1), vec![(a, b)], ScenarioKind::Mesh);
            let (s0, s1) = true_covariances(&topo, &s);
            let rep = localize(&s0, &s1, &opts(&topo)).unwrap();
            let pair = rep.pairs.iter().find(|p| (p.bus_i, p.bus_j) == (a.0.min(b.0), a.0.max(b.0))).unwrap();
            prop_assert!(pair.rho_post.abs() < 1e-8, "{a}-{b}: {}", pair.rho_post);
            if pair.rho_pre.abs() > rep.eps_conn {
                prop_assert!(rep.candidates.contains(&(pair.bus_i, pair.bus_j)));
            }
        }
    }
}
