mod common;

use aoii::combinatorics::Polynomial;
use aoii::cycle::{
    build_cycle_chain, build_cycle_chain_with, smdp_parameters, ChannelModel, DeliveryAbsorption,
    SourceModel,
};
use aoii::experiments::scenario_two;
use aoii::sim::{estimate_cycle_parameters, SimOptions};
use aoii::stochastic::StochasticMatrix;
use aoii::Error;
use common::{random_split, rng};
use rand::Rng;

fn two_state(p: f64, r: f64, w: [f64; 2]) -> SourceModel {
    let q = StochasticMatrix::from_rows(&[vec![1.0 - p, p], vec![r, 1.0 - r]]).unwrap();
    let f = Polynomial::new(w.to_vec()).unwrap();
    SourceModel::new(q, vec![f.clone(), f]).unwrap()
}

/// Cycle of type 1 in a two-state source over a geometric channel with
/// success probability `s`, worked out by hand. Out of sync the source sits
/// at 2; it returns with probability `r` per slot. Once transmitting, a slot
/// delivers with probability `s (1 - r)` and stays in flight with
/// `(1 - s)(1 - r)`.
struct Hand {
    mean: f64,
    second: f64,
    tx: f64,
    rho12: f64,
}

fn hand(r: f64, s: f64, tau: u32) -> Hand {
    let hold = 1.0 - r;
    let stay = (1.0 - s) * hold;
    let mut mean = 0.0;
    let mut second = 0.0;
    for t in 1..tau {
        let p = hold.powi(t as i32 - 1) * r;
        mean += t as f64 * p;
        second += (t as f64).powi(2) * p;
    }
    // T = tau - 1 + G with G geometric on {1, 2, ...} of parameter 1 - stay.
    let mass = hold.powi(tau as i32 - 1);
    let k = (tau - 1) as f64;
    let g1 = 1.0 / (1.0 - stay);
    let g2 = (1.0 + stay) / (1.0 - stay).powi(2);
    mean += mass * (k + g1);
    second += mass * (k * k + 2.0 * k * g1 + g2);
    Hand {
        mean,
        second,
        tx: mass * g1,
        rho12: mass * s * hold * g1,
    }
}

#[test]
fn two_state_geometric_channel_matches_hand_derivation() {
    for (p, r, s) in [(0.3, 0.4, 0.8), (0.6, 0.1, 0.5), (0.05, 0.9, 0.2), (0.5, 0.5, 1.0)] {
        let w = [0.5, 2.0];
        let source = two_state(p, r, w);
        let channel = ChannelModel::from_parts(&[1.0], &[vec![1.0 - s]]).unwrap();
        for tau in 1..=6 {
            let want = hand(r, s, tau);
            let cell = build_cycle_chain(&source, &channel, 0, tau)
                .unwrap()
                .parameters(&source)
                .unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
            assert!(close(cell.duration, 1.0 / p + want.mean), "d at tau {tau}");
            assert!(close(cell.tx_cost, want.tx), "c at tau {tau}");
            assert!(close(cell.transition_row[1], want.rho12));
            assert!(close(cell.transition_row[0], 1.0 - want.rho12));
            // sum_{t<=T} (w0 + w1 t) = w0 T + w1 T (T + 1) / 2
            let a = w[0] * want.mean + w[1] * (want.second + want.mean) / 2.0;
            assert!(close(cell.age_cost, a), "a at tau {tau}");
        }
    }
}

fn random_model<R: Rng>(rng: &mut R) -> (SourceModel, ChannelModel) {
    let n = rng.random_range(2..=5);
    let m = rng.random_range(1..=3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let stay = rng.random_range(0.0..0.9);
            let mut row = vec![0.0; n];
            let rest: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = rest.iter().sum();
            let mut k = 0;
            for (c, v) in row.iter_mut().enumerate() {
                if c == i {
                    *v = stay;
                } else {
                    *v = (1.0 - stay) * rest[k] / total;
                    k += 1;
                }
            }
            row
        })
        .collect();
    let penalties = (0..n)
        .map(|_| {
            let deg = rng.random_range(0..=3);
            Polynomial::new((0..=deg).map(|_| rng.random_range(0.0..1.5)).collect()).unwrap()
        })
        .collect();
    let source = SourceModel::new(StochasticMatrix::from_rows(&rows).unwrap(), penalties).unwrap();
    let gamma = random_split(rng, m, 1.0);
    let g: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let stay = rng.random_range(0.0..0.9);
            random_split(rng, m, stay)
        })
        .collect();
    (source, ChannelModel::from_parts(&gamma, &g).unwrap())
}

#[test]
fn transition_rows_agree_between_routes_and_are_stochastic() {
    let mut r = rng(11);
    for _ in 0..40 {
        let (source, channel) = random_model(&mut r);
        for j in 0..source.states() {
            for tau in [1, 2, 3, 7] {
                let cell = build_cycle_chain(&source, &channel, j, tau).unwrap();
                let a = cell.transition_row().unwrap();
                let b = cell.transition_row_from_absorption().unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-12);
                    assert!(*x >= -1e-15);
                }
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let p = cell.parameters(&source).unwrap();
                assert!(p.duration >= 2.0 - 1e-12);
                assert!(p.tx_cost >= 0.0 && p.age_cost >= 0.0);
            }
        }
    }
}

#[test]
fn transmission_cost_shrinks_with_threshold() {
    let mut r = rng(12);
    for _ in 0..10 {
        let (source, channel) = random_model(&mut r);
        let params = smdp_parameters(&source, &channel, 30).unwrap();
        for j in 0..source.states() {
            let c: Vec<f64> = (1..=30).map(|t| params.get(j, t).tx_cost).collect();
            assert!(c[29] < c[0]);
            assert!(c.iter().all(|x| *x >= 0.0));
        }
    }
}

#[test]
fn complement_weighting_is_rejected() {
    let s = scenario_two();
    let err = build_cycle_chain_with(&s.source, &s.channel, 0, 2, DeliveryAbsorption::ComplementOfHold)
        .unwrap_err();
    assert!(matches!(err, Error::RowSumViolation { .. }), "{err:?}");
}

#[test]
fn random_models_match_cycle_simulation() {
    let mut r = rng(13);
    for case in 0..4 {
        let (source, channel) = random_model(&mut r);
        let j = r.random_range(0..source.states());
        let tau = r.random_range(1..=4);
        let want = build_cycle_chain(&source, &channel, j, tau)
            .unwrap()
            .parameters(&source)
            .unwrap();
        let got =
            estimate_cycle_parameters(&source, &channel, j, tau, 50_000, 100 + case, &SimOptions::default())
                .unwrap();
        assert!(got.duration.within_std_errors(want.duration, 4.0), "case {case} d");
        assert!(got.tx_cost.within_std_errors(want.tx_cost, 4.0), "case {case} c");
        assert!(got.age_cost.within_std_errors(want.age_cost, 4.0), "case {case} a");
        let total: f64 = got.transition_row.iter().map(|e| e.mean).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (e, p) in got.transition_row.iter().zip(&want.transition_row) {
            let se = (p * (1.0 - p) / 50_000.0).sqrt();
            assert!((e.mean - p).abs() <= 4.0 * se + 1e-12, "case {case} rho");
        }
    }
}

#[test]
fn parameter_table_csv_layout() {
    let s = scenario_two();
    let params = smdp_parameters(&s.source, &s.channel, 2).unwrap();
    let mut buf = Vec::new();
    params.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "j,tau,age_cost,tx_cost,duration,rho_1,rho_2,rho_3");
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1].starts_with("1,1,"));
    assert!(lines[6].starts_with("3,2,"));
}
