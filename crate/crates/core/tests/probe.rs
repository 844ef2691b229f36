//! Manual probes for tuning the synthetic-recovery fixtures. Run with
//! `cargo test --release --test probe -- --ignored --nocapture`.

mod common;

use abbl::inference::{abc_fit, fit_across_models, FitConfig, ParameterGroup};
use abbl::knowledge::KnowledgeBase;
use abbl::rules::{ParameterAssignment, RuleSpec};
use abbl::value::Value;
use common::*;

#[test]
#[ignore]
fn probe_x_recovery() {
    let o = fixture_ontology();
    let scenario = single_slot_scenario("hunger", "human", "alice", 20, &["Happiness"]);
    let mut seed_kb = KnowledgeBase::new();
    seed_entity(
        &mut seed_kb,
        &o,
        "alice",
        "human",
        &[("Hunger", Value::Real(6.0)), ("Happiness", Value::Real(20.0))],
    );
    let truth = worldview_with(&o, "truth", &[hunger_rule_spec()]);
    let truth_params: ParameterAssignment = [("X".to_owned(), -3.0)].into();
    let kb = generate_data(&seed_kb, &o, &scenario, &truth, &truth_params, 1);

    let fit_wv = worldview_with(&o, "fit", &[hunger_rule_spec()]);
    let group = ParameterGroup::resolve(&["X".to_owned()], &fit_wv).unwrap();
    let config = FitConfig { n_samples: 10_000, n_runs_per_sample: 20, ..FitConfig::default() };
    for seed in [7u64, 8, 9] {
        let t0 = std::time::Instant::now();
        let fit = abc_fit(&group, &scenario, &o, &fit_wv, &kb, &config, seed).unwrap();
        let p = &fit.posteriors["X"];
        println!(
            "seed {seed}: mode {:+.3} mean {:+.3} sd {:.3} total_w {:.1} elapsed {:?}",
            p.mode(),
            p.mean(),
            p.variance().sqrt(),
            fit.total_weight,
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_p_recovery() {
    let o = fixture_ontology();
    let scenario = single_slot_scenario("points", "human", "bob", 40, &["Points"]);
    let mut seed_kb = KnowledgeBase::new();
    seed_entity(
        &mut seed_kb,
        &o,
        "bob",
        "human",
        &[("Hunger", Value::Real(6.0)), ("Points", Value::Real(10.0))],
    );
    let spec = RuleSpec::certain("human", "IF [Hunger] > 4 THEN [Points] = [Points] + 2")
        .probabilistic();
    let truth = worldview_with(&o, "truth", &[spec.clone()]);
    let truth_params: ParameterAssignment = [("p_rule".to_owned(), 0.7)].into();
    let kb = generate_data(&seed_kb, &o, &scenario, &truth, &truth_params, 11);

    let fit_wv = worldview_with(&o, "fit", &[spec]);
    let group = ParameterGroup::resolve(&["p_rule".to_owned()], &fit_wv).unwrap();
    let config = FitConfig { n_samples: 10_000, n_runs_per_sample: 20, ..FitConfig::default() };
    for seed in [21u64, 22, 23, 24, 25] {
        let t0 = std::time::Instant::now();
        let fit = abc_fit(&group, &scenario, &o, &fit_wv, &kb, &config, seed).unwrap();
        let p = &fit.posteriors["p_rule"];
        println!(
            "seed {seed}: mode {:.3} mean {:.3} sd {:.3} elapsed {:?}",
            p.mode(),
            p.mean(),
            p.variance().sqrt(),
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_multi_model() {
    let o = fixture_ontology();
    let truth = worldview_with(&o, "truth", &[hunger_rule_spec()]);
    let truth_params: ParameterAssignment = [("X".to_owned(), -3.0)].into();

    let mut kb = KnowledgeBase::new();
    let configs = [("alice", 20.0, 20usize), ("bob", 40.0, 18), ("carol", 10.0, 20)];
    let mut scenarios = Vec::new();
    for (entity, h0, steps) in configs {
        seed_entity(
            &mut kb,
            &o,
            entity,
            "human",
            &[("Hunger", Value::Real(6.0)), ("Happiness", Value::Real(h0))],
        );
        scenarios.push(single_slot_scenario(
            &format!("hunger-{entity}"),
            "human",
            entity,
            steps,
            &["Happiness"],
        ));
    }
    let mut data = kb.clone();
    for s in &scenarios {
        data = generate_data(&data, &o, s, &truth, &truth_params, 3);
    }

    let fit_wv = worldview_with(&o, "fit", &[hunger_rule_spec()]);
    for (tau, n_samples, seed) in
        [(0.15, 20_000, 5u64), (0.15, 20_000, 6), (0.15, 20_000, 7), (0.25, 20_000, 5)]
    {
        let config =
            FitConfig { n_samples, n_runs_per_sample: 1, tau, ..FitConfig::default() };
        let t0 = std::time::Instant::now();
        let fit =
            fit_across_models(&["X".to_owned()], &scenarios, &o, &fit_wv, &data, &config, seed)
                .unwrap();
        let modes: Vec<f64> =
            fit.per_model.iter().map(|(_, f)| f.posteriors["X"].mode()).collect();
        let vars: Vec<f64> =
            fit.per_model.iter().map(|(_, f)| f.posteriors["X"].variance()).collect();
        let overall = &fit.overall["X"];
        println!(
            "tau {tau} n {n_samples} seed {seed}: modes {modes:?} vars {vars:?} overall mode {:+.3} var {:.4} in {:?}",
            overall.mode(),
            overall.variance(),
            t0.elapsed(),
        );
    }
}

#[test]
#[ignore]
fn probe_indirect_learning() {
    let o = fixture_ontology();
    // Variants: (engagement rule, n_steps, tau)
    let variants: [(&str, usize, f64); 4] = [
        ("[Engagement] = [Engagement] + 0.2 * [Happiness] - 8", 40, 0.15),
        ("[Engagement] = [Engagement] + 0.2 * [Happiness] - 8", 40, 0.1),
        ("[Engagement] = [Engagement] + 0.2 * [Happiness] - 8", 26, 0.1),
        ("[Engagement] = [Engagement] + 0.2 * [Happiness] - 8", 32, 0.15),
    ];
    for (rule_text, n_steps, tau) in variants {
        let scenario = single_slot_scenario("chain", "human", "dina", n_steps, &["Engagement"]);
        let mut seed_kb = KnowledgeBase::new();
        seed_entity(
            &mut seed_kb,
            &o,
            "dina",
            "human",
            &[
                ("Hunger", Value::Real(6.0)),
                ("Happiness", Value::Real(20.0)),
                ("Engagement", Value::Real(50.0)),
            ],
        );
        let chain = vec![
            RuleSpec::certain("human", "[Hunger] = [Hunger] + 0.1"),
            hunger_rule_spec(),
            RuleSpec::certain("human", rule_text),
        ];
        let truth = worldview_with(&o, "truth", &chain);
        let truth_params: ParameterAssignment = [("X".to_owned(), -3.0)].into();
        let kb = generate_data(&seed_kb, &o, &scenario, &truth, &truth_params, 1);

        let fit_wv = worldview_with(&o, "fit", &chain);
        let group = ParameterGroup::resolve(&["X".to_owned()], &fit_wv).unwrap();
        let config =
            FitConfig { n_samples: 10_000, n_runs_per_sample: 1, tau, ..FitConfig::default() };
        for seed in [31u64, 32] {
            let fit = abc_fit(&group, &scenario, &o, &fit_wv, &kb, &config, seed).unwrap();
            let p = &fit.posteriors["X"];
            println!(
                "steps {n_steps} tau {tau} seed {seed}: mode {:+.3} KL {:.4}",
                p.mode(),
                p.kl_from_uniform()
            );
        }

        // Reference by grid enumeration: deterministic weight per bin center.
        let prior = abbl::inference::Posterior::uniform("X", -10.0, 10.0, 100);
        let weights: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let x = prior.center(i);
                let params: ParameterAssignment = [("X".to_owned(), x)].into();
                let report =
                    abbl::scoring::score_model(&scenario, &o, &fit_wv, &kb, &params, 1, 0, tau)
                        .unwrap();
                (x, report.model_score)
            })
            .collect();
        let reference =
            abbl::inference::Posterior::from_weighted("X", -10.0, 10.0, 100, weights).unwrap();
        println!(
            "steps {n_steps} tau {tau} reference: mode {:+.3} KL {:.4}",
            reference.mode(),
            reference.kl_from_uniform()
        );
    }
}
