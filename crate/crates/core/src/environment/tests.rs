use std::sync::Arc;

use rand::Rng;

use super::*;
use crate::primitives::Catalog;
use crate::{seed, toy};

fn env_with(config: EnvironmentConfig, table: Table) -> Environment {
    let mut env = Environment::new(config, Arc::new(Catalog::standard())).unwrap();
    env.reset(Arc::new(LearningJob::classification("toy", table).unwrap()))
        .unwrap();
    env
}

fn pick(env: &Environment, primitive: u16, inputs: &[usize]) -> ActionCandidate {
    env.open_list()
        .iter()
        .find(|c| c.primitive.0 == primitive && c.inputs == inputs)
        .unwrap_or_else(|| panic!("{primitive} {inputs:?} not open"))
        .clone()
}

fn blank(env: &Environment) -> ActionCandidate {
    env.open_list().last().unwrap().clone()
}

#[test]
fn reset_state() {
    let t = toy::blobs(60, 1);
    let raw = metafeatures(&t).unwrap();
    let mut env = env_with(EnvironmentConfig::default(), t);
    let s = env.base_state();
    assert!(s.grid_primitives.iter().all(|&v| v == -1.0));
    assert!(s.grid_inputs.iter().all(|&v| v == -1.0));
    assert_eq!(s.pipeline_meta, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(s.output_meta, raw.0);
    assert_eq!(&s.job[..2], &[1.0, 1.0]);
    assert_eq!(&s.job[2..], raw.as_slice());
    let layout = StateLayout { rows: 3, n_in: 3, slots: 6 };
    let padded: Vec<Option<&ActionCandidate>> = vec![None; 6];
    let sv = StateVector::new(Arc::new(s), env.encode_candidates(&padded));
    assert_eq!(sv.to_flat().len(), layout.total());
}

#[test]
fn first_cell_with_single_input() {
    let config = EnvironmentConfig {
        n_in: 1,
        ..EnvironmentConfig::default()
    };
    let env = env_with(config, toy::mixed(60, 2));
    // mixed data has missing and categorical cells: all three family-1
    // members accept it
    assert_eq!(env.open_list().len(), 3 + 1);
    assert!(env.open_list().iter().all(|c| c.inputs == vec![0]));
    assert!(env.open_list().last().unwrap().is_blank());
}

#[test]
fn ref_slots_are_scaled_cell_ids() {
    let c = ActionCandidate {
        primitive: PrimitiveId(3),
        inputs: vec![1, 5],
        valid: true,
        meta: MetaFeatures::zeros(),
    };
    let slots: Vec<f64> = c.ref_slots(3, 18).iter().map(|v| if *v >= 0.0 { v * 18.0 } else { *v }).collect();
    assert_eq!(slots, vec![1.0, 5.0, -1.0]);
}

#[test]
fn four_extra_sources_with_two_inputs_give_five_sets() {
    let config = EnvironmentConfig {
        n_in: 2,
        ..EnvironmentConfig::default()
    };
    let mut env = env_with(config, toy::blobs(60, 3));
    for (p, inputs) in [(1u16, vec![0usize]), (4, vec![1]), (7, vec![2]), (10, vec![3])] {
        let a = pick(&env, p, &inputs);
        env.step(&a).unwrap();
    }
    while env.grid().cursor() != Some(10) {
        let b = blank(&env);
        env.step(&b).unwrap();
    }
    let mut sets: Vec<Vec<usize>> = env.open_list().iter().map(|c| c.inputs.clone()).collect();
    sets.sort();
    sets.dedup();
    assert_eq!(sets.len(), 5);
    assert_eq!(env.open_list().len(), 3 * 5 + 1);
}

#[test]
fn step_rewards() {
    let mut env = env_with(EnvironmentConfig { rows: 1, ..EnvironmentConfig::default() }, toy::blobs(60, 4));
    let b = blank(&env);
    let out = env.step(&b).unwrap();
    assert_eq!((out.reward, out.done), (0.0, false));
    let out = env.step(&ActionCandidate::padding()).unwrap();
    assert_eq!(out.reward, -1.0);
    assert!(out.penalized);
    assert_eq!(*env.grid().cell(2), pipeline::CellState::Blank);
    for _ in 0..2 {
        let b = blank(&env);
        env.step(&b).unwrap();
    }
    let tree = pick(&env, 13, &[0]);
    assert_eq!(env.step(&tree).unwrap().reward, 0.0);
    let b = blank(&env);
    let out = env.step(&b).unwrap();
    assert!(out.done);
    let k = env.result().unwrap().kscore.unwrap();
    assert_eq!(out.reward, k);
    assert!(k > 0.5);
    assert!(matches!(env.step(&b), Err(EnvError::EpisodeOver)));
}

#[test]
fn empty_pipeline_is_penalized_at_the_end() {
    let mut env = env_with(EnvironmentConfig { rows: 1, ..EnvironmentConfig::default() }, toy::blobs(60, 4));
    let mut last = None;
    while !env.is_done() {
        let b = blank(&env);
        last = Some(env.step(&b).unwrap());
    }
    assert_eq!(last.unwrap().reward, -1.0);
}

#[test]
fn unusable_datasets_are_rejected() {
    let mut env = Environment::new(EnvironmentConfig::default(), Arc::new(Catalog::standard())).unwrap();
    let tiny = toy::constant_feature(10, 2);
    let job = Arc::new(LearningJob::classification("tiny", tiny).unwrap());
    assert!(matches!(env.reset(job), Err(EnvError::UnusableDataset { .. })));
}

#[test]
fn flat_table_size() {
    let cat = Catalog::standard();
    assert_eq!(FlatActions::new(&cat, 3, 3).len(), 898);
    assert_eq!(FlatActions::new(&cat, 1, 1).len(), 22 + 1);
}

#[test]
fn flat_indices_cover_the_open_list() {
    let cat = Catalog::standard();
    let flat = FlatActions::new(&cat, 3, 3);
    let mut env = env_with(EnvironmentConfig::default(), toy::blobs(60, 5));
    let mut rng = seed::rng(11);
    while !env.is_done() {
        for c in env.open_list() {
            let i = flat.index_of(c).expect("every legal action is enumerated");
            assert!(flat.candidate(i, &env).same_action(c));
        }
        let a = env.open_list()[rng.gen_range(0..env.open_list().len())].clone();
        env.step(&a).unwrap();
    }
}

#[test]
fn random_episodes_keep_the_contract() {
    let mut env = env_with(EnvironmentConfig::default(), toy::mixed(90, 6));
    let mut rng = seed::rng(3);
    for _ in 0..5 {
        env.reset(Arc::clone(env.job().unwrap())).unwrap();
        let mut steps = 0;
        let mut total = 0.0;
        while !env.is_done() {
            let list = env.open_list();
            assert!(!list.is_empty());
            let cell = env.grid().cursor().unwrap();
            let (_, column) = Grid::coords(cell);
            for c in list {
                assert_eq!(c.inputs[0], env.grid().mandatory_input());
                for &src in &c.inputs[1..] {
                    assert!(src < cell && Grid::coords(src).1 <= column);
                }
            }
            let a = if rng.gen_bool(0.1) {
                ActionCandidate::padding()
            } else {
                list[rng.gen_range(0..list.len())].clone()
            };
            let out = env.step(&a).unwrap();
            if !out.done {
                assert!(out.reward == 0.0 || out.reward == -1.0);
            } else {
                assert!(out.reward == -1.0 || (0.0..=1.0).contains(&out.reward));
            }
            total += out.reward;
            steps += 1;
        }
        assert_eq!(steps, 18);
        assert!((-18.0..=1.0).contains(&total));
    }
}
