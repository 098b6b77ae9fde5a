use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::Tape;

type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn matvec(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Random tree of `n` DOM nodes plus a virtual hub at 0, edges symmetric.
fn random_graph(
    rng: &mut ChaCha8Rng,
    n: usize,
    table_sizes: &[usize],
    categories: usize,
) -> EncodedGraph {
    let mut edges = Vec::new();
    for i in 1..=n {
        edges.push((0, i));
        edges.push((i, 0));
        if i > 1 {
            let p = rng.gen_range(1..i);
            edges.push((i, p));
            edges.push((p, i));
        }
    }
    edges.sort();
    EncodedGraph {
        url: format!("g{n}"),
        num_nodes: n + 1,
        edges,
        features: (0..n)
            .map(|_| table_sizes.iter().map(|&s| rng.gen_range(0..s)).collect())
            .collect(),
        category: rng.gen_range(0..categories),
    }
}

fn randomize(params: &mut ModelParams, rng: &mut ChaCha8Rng, scale: f64) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

fn setup(config: &ModelConfig, seed: u64) -> (ModelParams, Vec<usize>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = vec![3, 5, 4];
    let mut params = ModelParams::init(config, &sizes, 4, seed).unwrap();
    randomize(&mut params, &mut rng, 0.6);
    (params, sizes, rng)
}

fn small(arch: Arch, readout: Readout, use_category: bool) -> ModelConfig {
    ModelConfig {
        arch,
        readout,
        use_category,
        d: 6,
        num_layers: 2,
        ..ModelConfig::default()
    }
}

// ---- scalar oracles ----

fn oracle_h0(g: &EncodedGraph, p: &ModelParams) -> Mat {
    let mut h = vec![p.virtual_init.row(0).to_vec()];
    for f in &g.features {
        let mut row = vec![0.0; p.virtual_init.numel()];
        for (t, &i) in f.iter().enumerate() {
            for (o, v) in row.iter_mut().zip(p.feature_embeddings[t].row(i)) {
                *o += v;
            }
        }
        h.push(row);
    }
    h
}

fn oracle_gat(h: &Mat, edges: &[(usize, usize)], head: &GatHead, slope: f64) -> (Mat, Vec<f64>) {
    let (w1, w2, w3) = (mat(&head.w1), mat(&head.w2), head.w3.row(0).to_vec());
    let d = h[0].len();
    let mut out = vec![vec![0.0; d]; h.len()];
    let mut alpha = vec![0.0; edges.len()];
    for n in 0..h.len() {
        let inc: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].1 == n).collect();
        let gn = matvec(&w2, &h[n]);
        let logits: Vec<f64> = inc
            .iter()
            .map(|&e| {
                let gm = matvec(&w2, &h[edges[e].0]);
                let mut s = 0.0;
                for i in 0..d {
                    s += w3[i] * gn[i] + w3[d + i] * gm[i];
                }
                if s > 0.0 {
                    s
                } else {
                    slope * s
                }
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for (k, &e) in inc.iter().enumerate() {
            let a = (logits[k] - max).exp() / z;
            alpha[e] = a;
            let msg = matvec(&w1, &h[edges[e].0]);
            for i in 0..d {
                out[n][i] += a * msg[i];
            }
        }
    }
    for row in &mut out {
        row.iter_mut().for_each(|v| *v = elu(*v));
    }
    (out, alpha)
}

fn oracle_gin(h: &Mat, edges: &[(usize, usize)], eps: f64, mlp0: &Tensor, mlp1: &Tensor) -> Mat {
    let (a, b) = (mat(mlp0), mat(mlp1));
    (0..h.len())
        .map(|n| {
            let mut z: Vec<f64> = h[n].iter().map(|v| (1.0 + eps) * v).collect();
            for &(s, d) in edges {
                if d == n {
                    for (zi, hi) in z.iter_mut().zip(&h[s]) {
                        *zi += hi;
                    }
                }
            }
            let z: Vec<f64> = matvec(&a, &z).into_iter().map(elu).collect();
            matvec(&b, &z).into_iter().map(elu).collect()
        })
        .collect()
}

fn oracle_score(g: &EncodedGraph, p: &ModelParams, c: &ModelConfig) -> f64 {
    let mut h = oracle_h0(g, p);
    for layer in &p.layers {
        h = match layer {
            LayerParams::Gat(heads) => {
                let mut acc = vec![vec![0.0; c.d]; h.len()];
                for head in heads {
                    // undo the per-head ELU: heads are averaged before activation
                    let (_, alpha) = oracle_gat(&h, &g.edges, head, c.leaky_slope);
                    let w1 = mat(&head.w1);
                    for (e, &(s, d)) in g.edges.iter().enumerate() {
                        let msg = matvec(&w1, &h[s]);
                        for i in 0..c.d {
                            acc[d][i] += alpha[e] * msg[i] / heads.len() as f64;
                        }
                    }
                }
                acc.into_iter()
                    .map(|r| r.into_iter().map(elu).collect())
                    .collect()
            }
            LayerParams::Gin { eps, mlp0, mlp1 } => {
                oracle_gin(&h, &g.edges, eps.item(), mlp0, mlp1)
            }
        };
    }
    let mut r = match c.readout {
        Readout::Virtual => h[0].clone(),
        Readout::MeanPool => {
            let n = (h.len() - 1) as f64;
            (0..c.d)
                .map(|i| h[1..].iter().map(|row| row[i]).sum::<f64>() / n)
                .collect()
        }
    };
    if let Some(cat) = &p.category_embeddings {
        for (o, v) in r.iter_mut().zip(cat.row(g.category)) {
            *o += v;
        }
    }
    let logit: f64 = r
        .iter()
        .zip(p.readout_w.row(0))
        .map(|(a, b)| a * b)
        .sum::<f64>()
        + p.readout_b.item();
    match c.head {
        Head::Sigmoid => 1.0 / (1.0 + (-logit).exp()),
        Head::Linear => logit,
    }
}

fn run(params: &ModelParams, config: &ModelConfig, graphs: &[&EncodedGraph]) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false);
    let out = forward_batch(&mut tape, &vars, config, graphs, Mode::Eval).unwrap();
    tape.value(out.scores).data().to_vec()
}

fn all_configs() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for arch in [Arch::Gat, Arch::Gin] {
        for readout in [Readout::MeanPool, Readout::Virtual] {
            for cat in [false, true] {
                out.push(small(arch, readout, cat));
            }
        }
    }
    out
}

#[test]
fn gat_layer_matches_loop_oracle() {
    let config = small(Arch::Gat, Readout::Virtual, false);
    let (params, sizes, mut rng) = setup(&config, 11);
    let g = random_graph(&mut rng, 5, &sizes, 4);
    let h0 = oracle_h0(&g, &params);
    let LayerParams::Gat(heads) = &params.layers[0] else {
        unreachable!()
    };
    let (want, want_alpha) = oracle_gat(&h0, &g.edges, &heads[0], 0.2);

    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params, false);
    let h = tape.constant(Tensor::from_rows(&h0).unwrap());
    let LayerVars::Gat(hv) = &vars.layers[0] else {
        unreachable!()
    };
    let edges = EdgeIndex::new(g.num_nodes, &g.edges);
    let (out, alphas) = gat_layer(&mut tape, h, &edges, hv, 0.2).unwrap();
    for (n, row) in want.iter().enumerate() {
        for (a, b) in row.iter().zip(tape.value(out).row(n)) {
            assert!((a - b).abs() < 1e-10);
        }
    }
    for (a, b) in want_alpha.iter().zip(tape.value(alphas[0]).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gin_layer_matches_loop_oracle() {
    let config = small(Arch::Gin, Readout::Virtual, false);
    let (params, sizes, mut rng) = setup(&config, 12);
    let g = random_graph(&mut rng, 5, &sizes, 4);
    let h0 = oracle_h0(&g, &params);
    let LayerParams::Gin { eps, mlp0, mlp1 } = &params.layers[0] else {
        unreachable!()
    };
    let want = oracle_gin(&h0, &g.edges, eps.item(), mlp0, mlp1);

    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params, false);
    let h = tape.constant(Tensor::from_rows(&h0).unwrap());
    let LayerVars::Gin { eps, mlp0, mlp1 } = &vars.layers[0] else {
        unreachable!()
    };
    let edges = EdgeIndex::new(g.num_nodes, &g.edges);
    let out = gin_layer(&mut tape, h, &edges, *eps, *mlp0, *mlp1).unwrap();
    for (n, row) in want.iter().enumerate() {
        for (a, b) in row.iter().zip(tape.value(out).row(n)) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn forward_matches_composed_oracle() {
    let mut configs = all_configs();
    configs.push(ModelConfig {
        heads: 3,
        ..small(Arch::Gat, Readout::Virtual, true)
    });
    configs.push(ModelConfig {
        head: Head::Linear,
        ..small(Arch::Gat, Readout::MeanPool, true)
    });
    for (i, config) in configs.iter().enumerate() {
        let (params, sizes, mut rng) = setup(config, 100 + i as u64);
        let graphs: Vec<EncodedGraph> = (0..4)
            .map(|k| random_graph(&mut rng, 1 + 2 * k, &sizes, 4))
            .collect();
        let refs: Vec<&EncodedGraph> = graphs.iter().collect();
        let got = run(&params, config, &refs);
        for (g, s) in graphs.iter().zip(&got) {
            let want = oracle_score(g, &params, config);
            assert!((want - s).abs() < 1e-10, "{config}: {want} vs {s}");
        }
    }
}

#[test]
fn zero_network_scores_one_half() {
    for config in all_configs() {
        let (mut params, sizes, mut rng) = setup(&config, 3);
        params
            .tensors_mut()
            .into_iter()
            .for_each(|t| t.data_mut().fill(0.0));
        let g = random_graph(&mut rng, 7, &sizes, 4);
        assert_eq!(run(&params, &config, &[&g]), vec![0.5]);
    }
}

#[test]
fn initial_score_is_one_half() {
    let config = ModelConfig {
        d: 8,
        num_layers: 2,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParams::init(&config, &[3, 5, 4], 4, 9).unwrap();
    let g = random_graph(&mut rng, 9, &[3, 5, 4], 4);
    assert_eq!(run(&params, &config, &[&g]), vec![0.5]);
}

#[test]
fn category_sensitivity() {
    for readout in [Readout::MeanPool, Readout::Virtual] {
        let with = small(Arch::Gat, readout, true);
        let (params, sizes, mut rng) = setup(&with, 5);
        let a = random_graph(&mut rng, 6, &sizes, 4);
        let b = EncodedGraph {
            category: (a.category + 1) % 4,
            ..a.clone()
        };
        let s = run(&params, &with, &[&a, &b]);
        assert_ne!(s[0], s[1]);

        let without = small(Arch::Gat, readout, false);
        let (params, _, _) = setup(&without, 5);
        let s = run(&params, &without, &[&a, &b]);
        assert_eq!(s[0], s[1]);
    }
}

fn permute(g: &EncodedGraph, rng: &mut ChaCha8Rng) -> EncodedGraph {
    let n = g.num_nodes - 1;
    let mut perm: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let map = |i: usize| if i == 0 { 0 } else { perm[i - 1] };
    let mut features = vec![Vec::new(); n];
    for (i, f) in g.features.iter().enumerate() {
        features[map(i + 1) - 1] = f.clone();
    }
    let mut edges: Vec<(usize, usize)> = g.edges.iter().map(|&(s, d)| (map(s), map(d))).collect();
    edges.sort();
    EncodedGraph {
        features,
        edges,
        ..g.clone()
    }
}

#[test]
fn permutation_invariance() {
    for config in all_configs() {
        let (params, sizes, mut rng) = setup(&config, 21);
        for n in [1, 4, 9] {
            let g = random_graph(&mut rng, n, &sizes, 4);
            let p = permute(&g, &mut rng);
            let s = run(&params, &config, &[&g, &p]);
            assert!((s[0] - s[1]).abs() < 1e-10, "{config}");
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let config = ModelConfig {
        heads: 2,
        ..small(Arch::Gat, Readout::Virtual, true)
    };
    let (params, sizes, mut rng) = setup(&config, 8);
    let graphs: Vec<EncodedGraph> = (0..3)
        .map(|_| random_graph(&mut rng, 12, &sizes, 4))
        .collect();
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params, false);
    let refs: Vec<&EncodedGraph> = graphs.iter().collect();
    let out = forward_batch(&mut tape, &vars, &config, &refs, Mode::Eval).unwrap();
    for layer in &out.attention {
        for &alpha in layer {
            let mut sums = vec![0.0; out.edges.num_nodes];
            for (a, &d) in tape.value(alpha).data().iter().zip(out.edges.dst.iter()) {
                sums[d] += a;
            }
            assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
        }
    }
}

#[test]
fn one_neighbour_attention_is_one() {
    // single DOM node: every node has exactly one incoming edge
    let config = ModelConfig {
        d: 4,
        num_layers: 1,
        ..ModelConfig::default()
    };
    let (params, sizes, mut rng) = setup(&config, 2);
    let g = random_graph(&mut rng, 1, &sizes, 4);
    let h0 = oracle_h0(&g, &params);
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params, false);
    let out = forward_batch(&mut tape, &vars, &config, &[&g], Mode::Eval).unwrap();
    assert!(tape
        .value(out.attention[0][0])
        .data()
        .iter()
        .all(|a| *a == 1.0));
    let LayerParams::Gat(heads) = &params.layers[0] else {
        unreachable!()
    };
    let w1 = mat(&heads[0].w1);
    let want_virtual: Vec<f64> = matvec(&w1, &h0[1]).into_iter().map(elu).collect();
    for (a, b) in want_virtual.iter().zip(tape.value(out.node_states).row(0)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn star_with_identical_leaves_attends_uniformly() {
    let config = ModelConfig {
        d: 4,
        num_layers: 1,
        use_category: false,
        ..ModelConfig::default()
    };
    let (params, sizes, _) = setup(&config, 4);
    let mut edges = Vec::new();
    for i in 1..=5 {
        edges.extend([(0, i), (i, 0)]);
    }
    let leaf = vec![1, 2, 3];
    let g = EncodedGraph {
        url: "star".into(),
        num_nodes: 6,
        edges,
        features: vec![leaf; 5],
        category: 0,
    };
    let _ = sizes;
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params, false);
    let out = forward_batch(&mut tape, &vars, &config, &[&g], Mode::Eval).unwrap();
    let alpha = tape.value(out.attention[0][0]).data();
    for (a, &d) in alpha.iter().zip(out.edges.dst.iter()) {
        if d == 0 {
            assert!((a - 0.2).abs() < 1e-12);
        }
    }
}

#[test]
fn eval_is_bit_identical_and_batch_independent() {
    let config = small(Arch::Gat, Readout::MeanPool, true);
    let (params, sizes, mut rng) = setup(&config, 31);
    let graphs: Vec<EncodedGraph> = (0..70)
        .map(|k| random_graph(&mut rng, 1 + k % 9, &sizes, 4))
        .collect();
    let a = score_graphs(&params, &config, &graphs, 1).unwrap();
    let b = score_graphs(&params, &config, &graphs, 4).unwrap();
    assert_eq!(a, b);
    for (g, s) in graphs.iter().zip(&a) {
        assert_eq!(run(&params, &config, &[g])[0].to_bits(), s.to_bits());
        assert!((0.0..=1.0).contains(s));
    }
}

#[test]
fn mean_pool_on_single_node_is_root_state() {
    let config = small(Arch::Gat, Readout::MeanPool, false);
    let (params, sizes, mut rng) = setup(&config, 41);
    let g = random_graph(&mut rng, 1, &sizes, 4);
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params, false);
    let out = forward_batch(
        &mut tape,
        &vars,
        &ModelConfig {
            head: Head::Linear,
            ..config.clone()
        },
        &[&g],
        Mode::Eval,
    )
    .unwrap();
    let root = tape.value(out.node_states).row(1);
    let want: f64 = root
        .iter()
        .zip(params.readout_w.row(0))
        .map(|(a, b)| a * b)
        .sum::<f64>()
        + params.readout_b.item();
    assert_eq!(tape.value(out.scores).item(), want);
}

#[test]
fn every_parameter_receives_gradient() {
    for config in all_configs() {
        let (params, sizes, mut rng) = setup(&config, 51);
        let graphs: Vec<EncodedGraph> = (0..3)
            .map(|_| random_graph(&mut rng, 8, &sizes, 4))
            .collect();
        let refs: Vec<&EncodedGraph> = graphs.iter().collect();
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &params, true);
        let out = forward_batch(&mut tape, &vars, &config, &refs, Mode::Eval).unwrap();
        let loss = tape.mse(out.scores, &[1.0, 0.0, 1.0]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let names = params.names(&["a".into(), "b".into(), "c".into()]);
        for (name, v) in names.iter().zip(vars.vars()) {
            assert!(
                grads.get(v).norm() > 0.0,
                "{config}: `{name}` has zero gradient"
            );
        }
    }
}

#[test]
fn full_model_finite_differences() {
    let config = ModelConfig {
        d: 5,
        num_layers: 2,
        dropout: 0.2,
        ..ModelConfig::default()
    };
    let (params, sizes, mut rng) = setup(&config, 61);
    let g = random_graph(&mut rng, 5, &sizes, 4);
    let loss_of = |p: &ModelParams| {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, p, true);
        let out = forward_batch(&mut tape, &vars, &config, &[&g], Mode::Train { seed: 3 }).unwrap();
        let loss = tape.mse(out.scores, &[1.0]).unwrap();
        (
            tape.value(loss).item(),
            tape.backward(loss).unwrap(),
            vars.vars(),
        )
    };
    let (_, grads, vars) = loss_of(&params);
    let h = 1e-6;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v);
        for j in 0..analytic.numel() {
            let mut plus = params.clone();
            plus.tensors_mut()[k].data_mut()[j] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[k].data_mut()[j] -= h;
            let numeric = (loss_of(&plus).0 - loss_of(&minus).0) / (2.0 * h);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7);
            assert!(
                err < 1e-4 || (a - numeric).abs() < 1e-9,
                "tensor {k}[{j}]: {a} vs {numeric}"
            );
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    use crate::features::{FeatureEntry, FeatureSchema, FeatureSpec, FeatureVocab};
    let config = small(Arch::Gin, Readout::MeanPool, true);
    let (params, _, _) = setup(&config, 71);
    let entry = |name: &str, n: usize| FeatureEntry {
        name: name.into(),
        spec: FeatureSpec::Discrete(FeatureVocab {
            feature_name: name.into(),
            tokens: (1..n - 1).map(|i| i.to_string()).collect(),
        }),
        occupancy: vec![0; n - 1],
    };
    let schema = FeatureSchema {
        version: crate::features::SCHEMA_VERSION,
        tag_table_version: 1,
        embedding_dim: 6,
        min_count: 1,
        features: vec![entry("a", 3), entry("b", 5), entry("c", 4)],
        category_vocab: FeatureVocab {
            feature_name: "category".into(),
            tokens: vec!["x".into(), "y".into(), "z".into()],
        },
    };
    let ckpt = Checkpoint::new(&config, &schema, &params);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.params().unwrap(), params);
    assert_eq!(back.hash(), ckpt.hash());
    back.check_schema(&schema).unwrap();
    let mut other = schema.clone();
    other.min_count = 2;
    assert!(matches!(
        back.check_schema(&other),
        Err(Error::SchemaMismatch { .. })
    ));
}

#[test]
fn family_labels_round_trip() {
    let base = ModelConfig::default();
    for f in ModelConfig::all_families() {
        assert_eq!(base.with_family(f).unwrap().family(), f);
    }
    assert_eq!(base.family(), "Virt-GAT");
    assert!(base.with_family("TreeLSTM").is_err());
}
