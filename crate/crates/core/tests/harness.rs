use brokerage_core::harness::output::{summary_json, write_csv, CSV_COLUMNS, TIMESTAMP_PREFIX};
use brokerage_core::harness::{run_episode, sweep, AlgoSpec, FitOutcome, SweepConfig, SweepError};
use brokerage_core::instances::{
    make_lattice_instance_full, make_lattice_instance_limited, make_smooth_instance, BrokerageInstance, InstanceSpec,
    PairFamily, SignSource,
};
use brokerage_core::learners::{
    BiAve, Branch, Decision, ExBis, Feedback, FeedbackKind, FixedPrice, Learner, OraclePrice, RoundView,
};
use brokerage_core::rng::{stream, Role};
use brokerage_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn families(horizon: u64, dim: usize) -> Vec<(&'static str, BrokerageInstance)> {
    let mut rng = ChaCha8Rng::seed_from_u64(horizon);
    vec![
        ("lattice-full", make_lattice_instance_full(horizon, dim, SignSource::Random(&mut rng)).unwrap()),
        ("lattice-limited", make_lattice_instance_limited(horizon, dim, SignSource::Random(&mut rng)).unwrap()),
        ("smooth", make_smooth_instance(horizon, dim, &mut rng, 1.0, PairFamily::default()).unwrap()),
        (
            "smooth-split",
            make_smooth_instance(
                horizon,
                dim,
                &mut rng,
                0.5,
                PairFamily::SplitWindow { half_width: 0.15, block: 0.05 },
            )
            .unwrap(),
        ),
    ]
}

/// Posts NaN from round 3 on.
struct Broken(u64);

impl Learner for Broken {
    fn name(&self) -> &'static str {
        "broken"
    }
    fn feedback_kind(&self) -> Option<FeedbackKind> {
        None
    }
    fn decide(&mut self, round: &RoundView<'_>) -> Result<Decision> {
        self.0 = round.t;
        let price = if round.t >= 3 { f64::NAN } else { 0.5 };
        Ok(Decision { price, branch: Branch::Baseline, level: None })
    }
    fn observe(&mut self, _feedback: &Feedback) -> Result<()> {
        Ok(())
    }
}

#[test]
fn oracle_has_no_regret() {
    for dim in 1..=2 {
        for (name, inst) in families(8192, dim) {
            let records = run_episode(&mut OraclePrice::new(), &inst, FeedbackKind::Full, 1).unwrap();
            let total: f64 = records.iter().map(|r| r.instantaneous_regret).sum();
            assert!(total.abs() <= 1e-9 * inst.effective_horizon() as f64, "{name}: {total}");
        }
    }
}

#[test]
fn fixed_half_on_lattice_is_nearly_free() {
    for (name, inst) in families(4096, 1).into_iter().take(2) {
        let eps = inst.lattice().unwrap().epsilon;
        let records = run_episode(&mut FixedPrice::new(0.5).unwrap(), &inst, FeedbackKind::Full, 2).unwrap();
        let bound = inst.density_bound() * (eps / 196.0).powi(2);
        for r in &records {
            assert!(
                r.instantaneous_regret >= -1e-12 && r.instantaneous_regret <= bound + 1e-12,
                "{name} round {}",
                r.t
            );
        }
    }
}

#[test]
fn replay_gives_identical_records() {
    let inst = &families(4096, 2)[2].1;
    let a = run_episode(&mut BiAve::new(2).unwrap(), inst, FeedbackKind::Full, 5).unwrap();
    let b = run_episode(&mut BiAve::new(2).unwrap(), inst, FeedbackKind::Full, 5).unwrap();
    assert_eq!(a, b);
    let c = run_episode(&mut BiAve::new(2).unwrap(), inst, FeedbackKind::Full, 6).unwrap();
    assert_ne!(a, c);
}

#[test]
fn records_are_consistent() {
    let inst = &families(4096, 1)[1].1;
    let mut learner = ExBis::new(1, stream(0, &[], Role::Learner)).unwrap();
    let records = run_episode(&mut learner, inst, FeedbackKind::Limited, 3).unwrap();
    assert_eq!(records.len() as u64, inst.effective_horizon());
    let mut cum = 0.0;
    for r in &records {
        assert!(r.instantaneous_regret >= -1e-10);
        let previous = cum;
        cum += r.instantaneous_regret;
        assert!(cum >= previous - 1e-10);
        let g = r.realized_gft;
        assert!(g == 0.0 || (g > 0.0 && g <= 1.0));
        let traded = r.v.min(r.w) <= r.price && r.price <= r.v.max(r.w);
        assert_eq!(g, if traded { (r.v - r.w).abs() } else { 0.0 });
        assert_eq!(r.feedback, Feedback::reveal(FeedbackKind::Limited, r.price, r.v, r.w));
    }
}

#[test]
fn mismatched_feedback_stops_before_round_one() {
    let inst = &families(1024, 1)[0].1;
    let fault = run_episode(&mut BiAve::new(1).unwrap(), inst, FeedbackKind::Limited, 0).unwrap_err();
    assert_eq!(fault.t, 0);
    assert_eq!(fault.error, Error::Protocol("biave requires full feedback".into()));
    let mut exbis = ExBis::new(1, stream(0, &[], Role::Learner)).unwrap();
    let fault = run_episode(&mut exbis, inst, FeedbackKind::Full, 0).unwrap_err();
    assert_eq!(fault.error, Error::Protocol("exbis requires limited feedback".into()));
}

#[test]
fn invalid_price_is_a_learner_fault() {
    let inst = &families(1024, 1)[0].1;
    let fault = run_episode(&mut Broken(0), inst, FeedbackKind::Full, 0).unwrap_err();
    assert_eq!(fault.t, 3);
    assert!(matches!(fault.error, Error::LearnerFault { t: 3, price } if price.is_nan()));
    assert_eq!(fault.transcript.len(), 3);
    assert_eq!(fault.transcript[0].price, 0.5);
    assert!(fault.transcript[2].price.is_nan());
}

fn small_config() -> SweepConfig {
    SweepConfig {
        algo: AlgoSpec::Biave,
        feedback: FeedbackKind::Full,
        dim: 1,
        horizons: vec![512, 1024, 2048],
        seeds: 3,
        instance: InstanceSpec::LatticeFull { signs: None },
        master_seed: 4,
        workers: 2,
    }
}

#[test]
fn csv_has_the_expected_shape() {
    let result = sweep(&small_config()).unwrap();
    let mut buf = Vec::new();
    write_csv(&result, "0", &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(&*format!("{TIMESTAMP_PREFIX}0")));
    assert_eq!(lines.next(), Some(CSV_COLUMNS));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 8 && r[0] == "biave" && r[1] == "full" && r[2] == "1"));
    for h in [512u64, 1024, 2048] {
        for s in 0..3u64 {
            let cell: Vec<_> = rows.iter().filter(|r| r[3] == h.to_string() && r[4] == s.to_string()).collect();
            assert!(!cell.is_empty());
            let ts: Vec<u64> = cell.iter().map(|r| r[5].parse().unwrap()).collect();
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
            let regret: Vec<f64> = cell.iter().map(|r| r[6].parse().unwrap()).collect();
            assert!(regret.windows(2).all(|w| w[1] >= w[0] - 1e-10));
            assert!(cell.iter().all(|r| r[7].parse::<f64>().is_ok()));
        }
    }
}

#[test]
fn summary_carries_the_fit() {
    let result = sweep(&small_config()).unwrap();
    let json: serde_json::Value = serde_json::from_str(&summary_json(&result)).unwrap();
    assert_eq!(json["config"]["algo"]["name"], "biave");
    assert!((json["theory_slope"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(json["horizons"].as_array().unwrap().len(), 3);
    assert_eq!(json["fit"]["status"], "fitted");
    assert!(json.get("trajectories").is_none());
    let FitOutcome::Fitted(fit) = &result.fit else { panic!("degenerate fit") };
    assert!(fit.ci_low <= fit.fit.slope && fit.fit.slope <= fit.ci_high);
}

#[test]
fn sweeps_do_not_depend_on_worker_count() {
    let a = sweep(&small_config()).unwrap();
    let b = sweep(&SweepConfig { workers: 1, ..small_config() }).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    write_csv(&a, "", &mut x).unwrap();
    write_csv(&b, "", &mut y).unwrap();
    assert_eq!(x, y);
    assert_eq!(a.horizons, b.horizons);
    assert_eq!(a.fit, b.fit);
}

#[test]
fn setup_errors_are_reported() {
    let cfg = SweepConfig { algo: AlgoSpec::Exbis, ..small_config() };
    match sweep(&cfg) {
        Err(SweepError::Setup(Error::Config(m))) => assert_eq!(m, "exbis requires limited feedback"),
        other => panic!("unexpected {other:?}"),
    }
}
