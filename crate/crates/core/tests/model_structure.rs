use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use siclop::model::{predict, ModelConfig, ModelParams};
use siclop::numcore::Matrix;
use siclop::obsgraph::{feature_len, CoordinationGraph, GraphInput};

fn random_input(rng: &mut ChaCha8Rng, n: usize, edges: Vec<(usize, usize)>) -> GraphInput {
    let observations = Matrix::from_fn(n, feature_len(2), |_, _| rng.gen_range(-1.0..1.0));
    GraphInput { observations, graph: CoordinationGraph::new(n, edges) }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
}

#[test]
fn agents_beyond_layer_count_hops_have_no_influence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = ModelConfig::default();
    let layers = config.gcn_widths.len();
    let params = ModelParams::init(&config, 3);
    // path 0 - 1 - 2 - 3 - 4 - 5
    let path: Vec<(usize, usize)> = (0..5).map(|i| (i, i + 1)).collect();
    let input = random_input(&mut rng, 6, path);
    let base = predict(&params, &input).unwrap();

    let mut moved = input.clone();
    moved.observations.row_mut(5).iter_mut().for_each(|v| *v += 0.7);
    let after = predict(&params, &moved).unwrap();
    for agent in 0..6 {
        let unchanged = close(&base.policies[agent], &after.policies[agent]) && base.values[agent] == after.values[agent];
        let hops = 5 - agent;
        if hops > layers {
            assert!(unchanged, "agent {agent} is {hops} hops away");
        } else {
            assert!(!unchanged, "agent {agent} is {hops} hops away");
        }
    }
}

#[test]
fn relabelling_agents_permutes_the_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = ModelParams::init(&ModelConfig::default(), 5);
    for _ in 0..10 {
        let n = rng.gen_range(2..7);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.5) {
                    edges.push((i, j));
                }
            }
        }
        let input = random_input(&mut rng, n, edges.clone());
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        // agent i becomes agent perm[i]
        let mut observations = Matrix::zeros(n, input.observations.cols());
        for i in 0..n {
            observations.row_mut(perm[i]).copy_from_slice(input.observations.row(i));
        }
        let graph = CoordinationGraph::new(n, edges.iter().map(|&(i, j)| (perm[i], perm[j])));
        let relabelled = GraphInput { observations, graph };

        let a = predict(&params, &input).unwrap();
        let b = predict(&params, &relabelled).unwrap();
        for i in 0..n {
            assert!(close(&a.policies[i], &b.policies[perm[i]]));
            assert!((a.values[i] - b.values[perm[i]]).abs() < 1e-12);
        }
        assert!((a.aggregate_value - b.aggregate_value).abs() < 1e-12);
    }
}

#[test]
fn isolated_agents_match_single_agent_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ModelParams::init(&ModelConfig::default(), 7);
    let input = random_input(&mut rng, 3, vec![]);
    let joint = predict(&params, &input).unwrap();
    for i in 0..3 {
        let alone = GraphInput {
            observations: Matrix::from_vec(1, input.observations.cols(), input.observations.row(i).to_vec()).unwrap(),
            graph: CoordinationGraph::new(1, []),
        };
        let single = predict(&params, &alone).unwrap();
        assert!(close(&joint.policies[i], &single.policies[0]));
    }
}
