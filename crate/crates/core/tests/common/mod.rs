//! Shared fixtures for integration tests: toy ontologies, scenario builders
//! and a synthetic-data generator that runs a ground-truth worldview through
//! the simulator and records the observed attributes as a knowledge base.

#![allow(dead_code)]

use abbl::knowledge::{KnowledgeBase, MergePolicy, Observation};
use abbl::ontology::{AttributeDef, Ontology, RelationDef, ROOT_ID};
use abbl::rules::{ParameterAssignment, Rule, RuleSpec};
use abbl::simulation::{self, AgentSlot, ObservedAttr, Scenario};
use abbl::value::Value;
use abbl::worldview::WorldView;

/// Ontology used across the synthetic-recovery fixtures: a `human` type with
/// drive/mood/output attributes, a `household` it can live in, and a
/// `country` hierarchy for the generalization fixtures.
pub fn fixture_ontology() -> Ontology {
    let mut o = Ontology::new();
    o.add_agent_type(
        "Household",
        ROOT_ID,
        vec![AttributeDef::boolean("Is in dept")],
        vec![],
    )
    .unwrap();
    o.add_agent_type(
        "Human",
        ROOT_ID,
        vec![
            AttributeDef::continuous("Hunger", 0.0, 10.0),
            AttributeDef::continuous("Happiness", 0.0, 100.0),
            AttributeDef::continuous("Engagement", 0.0, 200.0),
            AttributeDef::continuous("Points", 0.0, 100.0),
            AttributeDef::continuous("Height (meters)", 0.0, 100.0),
            AttributeDef::continuous("Height (feet)", 0.0, 350.0),
        ],
        vec![RelationDef::new("lives in household", "household")],
    )
    .unwrap();
    let country = o
        .add_agent_type(
            "Country",
            ROOT_ID,
            vec![
                AttributeDef::continuous("GDP", 0.0, 100_000.0),
                AttributeDef::continuous("Population", 0.0, 2.0e9),
                AttributeDef::text("ISO code"),
            ],
            vec![],
        )
        .unwrap();
    o.add_agent_type("Island Country", &country, vec![], vec![]).unwrap();
    o
}

/// The three reference rule specs exercised by the parser fixtures.
pub fn hunger_rule_spec() -> RuleSpec {
    RuleSpec::certain("human", "IF [Hunger] > 4 THEN [Happiness] = [Happiness] - X")
        .with_param("X", -10.0, 10.0)
}

pub fn household_debt_rule_spec() -> RuleSpec {
    RuleSpec::certain(
        "human",
        "IF [lives in household].[Is in dept] == True THEN [Happiness] = [Happiness] - Y",
    )
    .with_param("Y", -10.0, 10.0)
    .probabilistic()
}

pub fn height_conversion_rule_spec() -> RuleSpec {
    RuleSpec::certain("human", "[Height (meters)] = 3.281 * [Height (feet)]")
}

/// Single-slot scenario bound to `entity`, observing the given attributes.
pub fn single_slot_scenario(
    id: &str,
    agent_type: &str,
    entity: &str,
    n_steps: usize,
    observed: &[&str],
) -> Scenario {
    Scenario {
        id: id.to_owned(),
        agents: vec![AgentSlot {
            slot: "agent".to_owned(),
            agent_type: agent_type.to_owned(),
            entity: Some(entity.to_owned()),
            filters: vec![],
        }],
        relations: vec![],
        dt: 1.0,
        n_steps,
        observed: observed
            .iter()
            .map(|attr| ObservedAttr { slot: "agent".to_owned(), attribute: (*attr).to_owned() })
            .collect(),
    }
}

pub fn worldview_with(ontology: &Ontology, id: &str, specs: &[RuleSpec]) -> WorldView {
    let mut wv = WorldView::new(id);
    for spec in specs {
        wv.add_rule(Rule::parse(spec, ontology).unwrap()).unwrap();
    }
    wv
}

/// Initial observations (t = 0) for one entity.
pub fn seed_entity(
    kb: &mut KnowledgeBase,
    ontology: &Ontology,
    entity: &str,
    agent_type: &str,
    values: &[(&str, Value)],
) {
    let obs = values
        .iter()
        .map(|(attr, value)| Observation {
            entity_id: entity.to_owned(),
            agent_type: agent_type.to_owned(),
            attribute: (*attr).to_owned(),
            time: 0.0,
            value: value.clone(),
        })
        .collect();
    kb.insert(obs, ontology, MergePolicy::Error).unwrap();
}

/// Run the ground-truth worldview once on a seed knowledge base and append
/// the full histories of the scenario's observed attributes, producing the
/// dataset an inference fixture trains on.
pub fn generate_data(
    seed_kb: &KnowledgeBase,
    ontology: &Ontology,
    scenario: &Scenario,
    truth: &WorldView,
    truth_params: &ParameterAssignment,
    seed: u64,
) -> KnowledgeBase {
    let trajectory =
        simulation::run(scenario, ontology, truth, seed_kb, truth_params, seed).unwrap();
    let mut kb = seed_kb.clone();
    let mut observations = Vec::new();
    for obs in &scenario.observed {
        let slot = scenario.slot(&obs.slot).unwrap();
        let entity = slot.entity.clone().expect("generator scenarios are bound");
        for step in 1..=scenario.n_steps {
            let value = trajectory
                .value_at(step, &obs.slot, &obs.attribute)
                .expect("observed attribute present")
                .clone();
            observations.push(Observation {
                entity_id: entity.clone(),
                agent_type: slot.agent_type.clone(),
                attribute: obs.attribute.clone(),
                time: scenario.step_time(step),
                value,
            });
        }
    }
    kb.insert(observations, ontology, MergePolicy::Error).unwrap();
    kb
}

/// Certain growth rules for the country fixtures.
pub fn country_rules() -> Vec<RuleSpec> {
    vec![
        RuleSpec::certain("country", "[GDP] = [GDP] + 2000"),
        RuleSpec::certain("country", "[Population] = [Population] + 100000"),
    ]
}

/// Knowledge base with three countries whose 8-point histories (t = 0..7)
/// were generated by the growth worldview, plus the bound per-country
/// scenarios used to generate them.
pub fn country_fixture(ontology: &Ontology) -> (KnowledgeBase, Vec<Scenario>, WorldView) {
    let truth = worldview_with(ontology, "growth", &country_rules());
    let mut kb = KnowledgeBase::new();
    let countries = [
        ("sri-lanka", "island-country", 56_726.0, 20_261_737.0, "LKA"),
        ("ghana", "country", 32_174.0, 24_779_000.0, "GHA"),
        ("iceland", "island-country", 13_751.0, 318_000.0, "ISL"),
    ];
    let mut scenarios = Vec::new();
    for (entity, agent_type, gdp, population, iso) in countries {
        seed_entity(
            &mut kb,
            ontology,
            entity,
            agent_type,
            &[
                ("GDP", Value::Real(gdp)),
                ("Population", Value::Real(population)),
                ("ISO code", Value::Text(iso.to_owned())),
            ],
        );
        scenarios.push(single_slot_scenario(
            &format!("history-{entity}"),
            agent_type,
            entity,
            7,
            &["GDP", "Population", "ISO code"],
        ));
    }
    let mut data = kb;
    for scenario in &scenarios {
        data = generate_data(&data, ontology, scenario, &truth, &ParameterAssignment::new(), 0);
    }
    (data, scenarios, truth)
}

/// CSV dump of a knowledge base in the ingest schema, for CLI fixtures.
pub fn kb_to_csv(kb: &KnowledgeBase) -> String {
    let mut out = String::from("entity_id,agent_type,attribute,time,value\n");
    for obs in kb.observations() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            obs.entity_id, obs.agent_type, obs.attribute, obs.time, obs.value
        ));
    }
    out
}
