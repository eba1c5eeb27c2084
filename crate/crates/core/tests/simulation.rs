mod common;

use common::*;
use jamgame::nonsensing::solve_equilibrium;
use jamgame::reactive::{objective_jtilde, transmit_region};
use jamgame::sim::*;
use jamgame::GameInstance;

const N: usize = 1_000_000;

fn within_three_se(r: &SimResult, want: f64) -> bool {
    (r.empirical_cost - want).abs() <= 3.0 * r.std_error
}

fn conditional_frequencies_match(r: &SimResult, alpha: f64, beta: f64) {
    for (u, p) in [(false, alpha), (true, beta)] {
        let n = r.count_u(u);
        let got = if u { r.jam_given_transmit } else { r.jam_given_silent }.unwrap();
        let se = binomial_std_error(p, n);
        assert!((got - p).abs() <= 3.0 * se, "u={u}: {got} vs {p} (se {se})");
    }
}

#[test]
fn nonsensing_equilibrium_cost() {
    let inst = gaussian(2.0);
    let eq = solve_equilibrium(&inst).unwrap();
    let r = simulate(&inst, &bundle_from_nonsensing(&eq), N, 2026).unwrap();
    assert!(within_three_se(&r, eq.value), "{} vs {}", r.empirical_cost, eq.value);
    let se = binomial_std_error(eq.phi_star, r.n);
    assert!((r.p_jam - eq.phi_star).abs() <= 3.0 * se);
}

#[test]
fn nonsensing_bundles_package_solutions() {
    for var in [1.0, 2.0, 5.0] {
        let eq = solve_equilibrium(&gaussian(var)).unwrap();
        let b = bundle_from_nonsensing(&eq);
        assert_eq!(b.jam, JamMode::NonSensing { phi: eq.phi_star });
        assert_eq!(
            b.transmit,
            TransmitRule::Band {
                center: 0.0,
                radius: eq.threshold
            }
        );
        assert!(b.transmit.transmits(eq.threshold + 1e-9) && !b.transmit.transmits(0.0));
    }
}

#[test]
fn table_rows_cost_and_channel() {
    for row in [0, 2, 4] {
        let var = TABLE_ONE[row].0;
        let inst = gaussian(var);
        let p = table_point(row);
        let r = simulate(&inst, &bundle_from_reactive(&p, &inst), N, 2026 + row as u64).unwrap();
        let want = objective_jtilde(&inst, &p).unwrap();
        assert!(within_three_se(&r, want), "sigma2={var}: {} vs {want}", r.empirical_cost);
        conditional_frequencies_match(&r, p.alpha, p.beta);
    }
}

#[test]
fn transmit_probability_matches_region_mass() {
    let inst = gaussian(1.0);
    let p = table_point(0);
    let region = transmit_region(p.xhat(), p.theta(), 1.0, 1.0);
    let want = region.transmit_probability(&inst.dist);
    let r = simulate(&inst, &bundle_from_reactive(&p, &inst), 200_000, 5).unwrap();
    assert!((r.p_transmit - want).abs() <= 3.0 * binomial_std_error(want, r.n));
}

#[test]
fn estimator_is_unbiased_across_seeds() {
    let inst = gaussian(2.0);
    let eq = solve_equilibrium(&inst).unwrap();
    let b = bundle_from_nonsensing(&eq);
    let runs: Vec<SimResult> = (0..20).map(|s| simulate(&inst, &b, 100_000, 100 + s).unwrap()).collect();
    let mean = runs.iter().map(|r| r.empirical_cost).sum::<f64>() / 20.0;
    let pooled = (runs.iter().map(|r| r.std_error.powi(2)).sum::<f64>()).sqrt() / 20.0;
    assert!((mean - eq.value).abs() <= 3.0 * pooled);
}

#[test]
fn laplace_source_agrees_with_quadrature() {
    let inst = GameInstance::new(jamgame::SourceDistribution::laplace(1.0).unwrap(), 1.0, 1.0).unwrap();
    let eq = solve_equilibrium(&inst).unwrap();
    let b = bundle_from_nonsensing(&eq);
    let r = simulate(&inst, &b, 400_000, 9).unwrap();
    assert!(within_three_se(&r, expected_cost(&inst, &b).unwrap()));
}

#[test]
fn event_trace_and_csv() {
    let inst = gaussian(1.0);
    let b = bundle_from_reactive(&table_point(0), &inst);
    let (r, events) = simulate_with_trace(&inst, &b, 50_000, 1, 10_000).unwrap();
    assert_eq!(events.len(), 10_000);
    assert!(events.iter().enumerate().all(|(i, e)| e.index == i));
    for e in &events {
        match e.y {
            ChannelOutput::Blocked => assert!(e.j && e.xhat == b.xhat1),
            ChannelOutput::Received => assert!(e.u && !e.j && e.xhat == e.x),
            ChannelOutput::Idle => assert!(!e.u && !e.j && e.xhat == b.xhat0),
        }
    }
    let mut buf = Vec::new();
    write_events_csv(&events, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("index,x,u,j,y,xhat,cost"));
    assert_eq!(text.lines().count(), 10_001);
    let json = serde_json::to_string(&r).unwrap();
    let back: SimResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}
