use upstream_core::evaluation::{
    compute_metrics, read_table_csv, run_monte_carlo, run_monte_carlo_range, write_table_csv,
    Assignment, BootstrapSpec, EvalPlan, GameSetup, MonteCarloOutput, PolicySet, SliceKey,
};
use upstream_core::firms::default_profiles;
use upstream_core::game::{Action, GameConfig};
use upstream_core::geology::sample_lead_catalog;
use upstream_core::market::Regime;
use upstream_core::rng::{named, Stream};
use upstream_core::strategies::{
    LadderParams, LadderPolicy, PolicyKind, RandomPolicy, ScriptedPolicy,
};

fn setup() -> GameSetup {
    let config = GameConfig::default();
    GameSetup {
        catalog: sample_lead_catalog(&config.catalog, &mut named(2, Stream::Catalog)).unwrap(),
        profiles: default_profiles(&config.risk_premium).unwrap(),
        config,
    }
}

fn policies(setup: &GameSetup, scripted: Option<ScriptedPolicy>) -> PolicySet {
    PolicySet {
        ladder: LadderPolicy {
            params: LadderParams::default(),
            config: setup.config.clone(),
        },
        rl: None,
        scripted,
        random: RandomPolicy,
    }
}

fn plan(episodes: usize, workers: usize) -> EvalPlan {
    EvalPlan {
        episodes,
        master_seed: 31,
        n_firms: vec![2, 6],
        regimes: Regime::ALL.to_vec(),
        workers,
        trace_episodes: episodes,
    }
}

const MIXED: Assignment = Assignment::Mixed {
    alt: PolicyKind::Random,
    std: PolicyKind::StandardLadder,
};

#[test]
fn results_do_not_depend_on_partition_or_workers() {
    let s = setup();
    let ps = policies(&s, None);
    let whole = run_monte_carlo(&s, &ps, &MIXED, &plan(24, 1)).unwrap();
    let parallel = run_monte_carlo(&s, &ps, &MIXED, &plan(24, 4)).unwrap();
    assert_eq!(whole.results, parallel.results);
    assert_eq!(whole.traces, parallel.traces);

    let p = plan(24, 2);
    let mut first = run_monte_carlo_range(&s, &ps, &MIXED, &p, 0..10).unwrap();
    let second = run_monte_carlo_range(&s, &ps, &MIXED, &p, 10..24).unwrap();
    first.results.extend(second.results);
    assert_eq!(first.results, whole.results);
}

#[test]
fn npv_equals_discounted_replay_of_trace() {
    let s = setup();
    let MonteCarloOutput {
        results, traces, ..
    } = run_monte_carlo(&s, &policies(&s, None), &MIXED, &plan(12, 2)).unwrap();
    for r in &results {
        let trace = &traces[&r.index];
        for a in &r.agents {
            let replay: f64 = trace
                .iter()
                .map(|step| {
                    let rec = &step.agents[a.agent];
                    rec.reward / (1.0 + a.rate).powi(step.t as i32)
                })
                .sum();
            let scale = a.npv.abs().max(1.0);
            assert!(
                (replay - a.npv).abs() <= 1e-9 * scale,
                "episode {} agent {}: {replay} vs {}",
                r.index,
                a.agent,
                a.npv
            );
        }
    }
}

#[test]
fn all_defer_has_zero_npv_and_undefined_success() {
    let s = setup();
    let scripted = ScriptedPolicy {
        table: [Action::DEFER; 5],
    };
    let assignment = Assignment::Uniform(PolicyKind::Scripted);
    let out = run_monte_carlo(&s, &policies(&s, Some(scripted)), &assignment, &plan(6, 1)).unwrap();
    for a in out.results.iter().flat_map(|r| r.agents.iter()) {
        assert_eq!(a.npv, 0.0);
        assert_eq!(a.es_flag, None);
        assert_eq!(a.capital_at_risk, 0.0);
    }
    let table = compute_metrics(
        &out.results,
        SliceKey::NFirms,
        PolicyKind::Scripted,
        PolicyKind::StandardLadder,
        &BootstrapSpec::default(),
        1,
    )
    .unwrap();
    for row in &table.rows {
        assert_eq!(row.alt.es_rate, None);
        assert_eq!(row.alt.npv_mean, Some(0.0));
        assert_eq!(row.alt.raroc, None);
        assert_eq!(row.std.npv_mean, None);
    }
}

#[test]
fn metric_tables_round_trip_and_cover_every_slice() {
    let s = setup();
    let out = run_monte_carlo(&s, &policies(&s, None), &MIXED, &plan(30, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for key in [SliceKey::NFirms, SliceKey::Scenario, SliceKey::LeadSize] {
        let table = compute_metrics(
            &out.results,
            key,
            PolicyKind::Random,
            PolicyKind::StandardLadder,
            &BootstrapSpec::default(),
            5,
        )
        .unwrap();
        let episodes: usize = table.rows.iter().map(|r| r.episodes).sum();
        assert_eq!(episodes, 30, "{key:?}");
        let path = dir.path().join(format!("{}.csv", key.file_stem()));
        write_table_csv(&path, &table).unwrap();
        assert_eq!(read_table_csv(&path, key).unwrap(), table);
    }
}

#[test]
fn seats_alternate_between_strategies() {
    let s = setup();
    let out = run_monte_carlo(&s, &policies(&s, None), &MIXED, &plan(4, 1)).unwrap();
    for r in &out.results {
        let alt = r
            .agents
            .iter()
            .filter(|a| a.policy == PolicyKind::Random)
            .count();
        assert_eq!(alt, r.n_firms / 2);
        for a in &r.agents {
            assert_eq!(a.policy, MIXED.kind(r.index, a.agent));
        }
    }
}
