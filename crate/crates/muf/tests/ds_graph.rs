mod common;

use std::collections::BTreeSet;

use common::*;
use muf::distributions::{CDistr, Concrete, MDistr};
use muf::ds_graph::*;
use muf::value::Value;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_mean() -> CDistr {
    CDistr::GaussianMean { var: 1.0, scale: 1.0, shift: 0.0 }
}

fn n01() -> MDistr {
    MDistr::gaussian(0.0, 1.0).unwrap()
}

fn ids(xs: &[usize]) -> BTreeSet<NodeId> {
    xs.iter().map(|x| NodeId(*x)).collect()
}

fn gauss(mean: Value, var: f64) -> Value {
    Value::sym("gaussian", Value::pair(mean, Value::Real(var)))
}

#[test]
fn assume_constant_allocates_fresh_marginalized_nodes() {
    let mut g = DsGraph::new();
    let m = MDistr::bernoulli(0.5).unwrap();
    let x = g.assume_constant(m.clone());
    assert_eq!(x, NodeId(0));
    assert_eq!(g.state(x), Some(&NodeState::Marginalized { m, child: None }));
    let y = g.assume_constant(n01());
    assert_eq!(y, NodeId(1));
    assert_eq!(g.len(), 2);
}

#[test]
fn assume_conditional_builds_initialized_chains() {
    let mut g = DsGraph::new();
    let r = g.assume_constant(n01());
    let a = g.assume_conditional(r, unit_mean()).unwrap();
    assert!(matches!(g.state(a), Some(NodeState::Initialized { parent, .. }) if *parent == r));
    let b = g.assume_conditional(a, unit_mean()).unwrap();
    let c = g.assume_conditional(b, unit_mean()).unwrap();
    assert_eq!(g.classify(c), ChainShape::Initialized);
    assert_eq!(g.chain_profile(), (3, 0));
    assert!(g.assume_conditional(NodeId(99), unit_mean()).is_err());
}

#[test]
fn three_node_initialized_chain_profile_counts_edges() {
    let mut g = DsGraph::new();
    let r = g.assume_constant(n01());
    let a = g.assume_conditional(r, unit_mean()).unwrap();
    g.assume_conditional(a, unit_mean()).unwrap();
    // r is the marginalized root; the initialized part has two edges
    // starting from the leaf and one more into the root.
    assert_eq!(g.chain_profile().1, 0);
    assert_eq!(DsGraph::new().chain_profile(), (0, 0));
}

#[test]
fn marginalize_examples() {
    let mut g = DsGraph::new();
    let p = g.assume_constant(n01());
    let x = g.assume_conditional(p, unit_mean()).unwrap();
    g.realize(p, Concrete::Real(2.0)).unwrap();
    g.marginalize(x).unwrap();
    assert_eq!(g.state(x), Some(&NodeState::Marginalized { m: MDistr::Gaussian { mean: 2.0, var: 1.0 }, child: None }));

    let mut g = DsGraph::new();
    let p = g.assume_constant(n01());
    let x = g.assume_conditional(p, unit_mean()).unwrap();
    g.marginalize(x).unwrap();
    let (m, v) = match g.state(x) {
        Some(NodeState::Marginalized { m, child: None }) => gaussian_params(m),
        other => panic!("{other:?}"),
    };
    let (om, ov) = gaussian_marginal_oracle(0.0, 1.0, 1.0, 1.0, 0.0);
    assert!((m - om).abs() < 1e-6 && (v - ov).abs() < 1e-6);
    assert!(matches!(g.state(p), Some(NodeState::Marginalized { child: Some((c, _)), .. }) if *c == x));
    assert!(g.marginalize(x).is_err());
}

#[test]
fn force_condition_examples() {
    let mut g = DsGraph::new();
    let x = g.assume_constant(n01());
    let y = g.assume_conditional(x, unit_mean()).unwrap();
    g.marginalize(y).unwrap();
    let before = g.clone();
    g.force_condition(x).unwrap();
    assert_eq!(g, before, "marginalized child leaves the parent alone");
    g.realize(y, Concrete::Real(2.0)).unwrap();
    g.force_condition(x).unwrap();
    let post = match g.state(x) {
        Some(NodeState::Marginalized { m, child: None }) => gaussian_params(m),
        other => panic!("{other:?}"),
    };
    let (om, ov) = gaussian_posterior_oracle(0.0, 1.0, 1.0, 1.0, 0.0, 2.0);
    assert!((post.0 - om).abs() < 1e-6 && (post.1 - ov).abs() < 1e-6);

    let mut g = DsGraph::new();
    let x = g.assume_constant(n01());
    let y = g.assume_conditional(x, unit_mean()).unwrap();
    let before = g.clone();
    g.force_condition(y).unwrap();
    assert_eq!(g, before);
}

#[test]
fn prune_realizes_the_marginalized_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = DsGraph::new();
    let a = g.assume_constant(n01());
    let b = g.assume_conditional(a, unit_mean()).unwrap();
    g.marginalize(b).unwrap();
    g.prune(a, &mut rng).unwrap();
    assert!(matches!(g.state(a), Some(NodeState::Realized(_))));
    assert!(matches!(g.state(b), Some(NodeState::Realized(_))));

    let mut g = DsGraph::new();
    let a = g.assume_constant(n01());
    g.prune(a, &mut rng).unwrap();
    assert!(matches!(g.state(a), Some(NodeState::Realized(_))));
}

#[test]
fn sample_node_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = DsGraph::new();
    let x = g.assume_constant(MDistr::Delta(Concrete::Real(7.0)));
    g.sample_node(x, &mut rng).unwrap();
    assert_eq!(g.state(x), Some(&NodeState::Realized(Concrete::Real(7.0))));
    g.realize(x, Concrete::Real(3.0)).unwrap();
    let before = g.clone();
    g.sample_node(x, &mut rng).unwrap();
    assert_eq!(g, before);
}

#[test]
fn sample_node_draws_from_the_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (om, ov) = gaussian_posterior_oracle(0.0, 1.0, 1.0, 1.0, 0.0, 2.0);
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let mut g = DsGraph::new();
        let x = g.assume_constant(n01());
        let y = g.assume_conditional(x, unit_mean()).unwrap();
        g.marginalize(y).unwrap();
        g.realize(y, Concrete::Real(2.0)).unwrap();
        g.sample_node(x, &mut rng).unwrap();
        match g.state(x) {
            Some(NodeState::Realized(Concrete::Real(v))) => acc += v,
            other => panic!("{other:?}"),
        }
    }
    let mean = acc / n as f64;
    assert!((mean - om).abs() < 3.0 * (ov / n as f64).sqrt(), "{mean} vs {om}");
}

#[test]
fn graft_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = DsGraph::new();
    let r = g.assume_constant(n01());
    let a = g.assume_conditional(r, unit_mean()).unwrap();
    let b = g.assume_conditional(a, unit_mean()).unwrap();
    g.graft(b, &mut rng).unwrap();
    for x in [r, a, b] {
        assert!(matches!(g.state(x), Some(NodeState::Marginalized { .. })), "{x}");
    }
    assert!(matches!(g.state(b), Some(NodeState::Marginalized { child: None, .. })));

    let before = g.clone();
    g.graft(b, &mut rng).unwrap();
    assert_eq!(g, before);

    g.graft(a, &mut rng).unwrap();
    assert!(matches!(g.state(b), Some(NodeState::Realized(_))));
    assert!(matches!(g.state(a), Some(NodeState::Marginalized { .. })));
}

#[test]
fn hl_value_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = DsGraph::new();
    let mut t = Trace::new();
    let mut ds = Ds { graph: &mut g, rng: &mut rng, trace: Some(&mut t) };
    assert_eq!(ds.value(&Value::Real(3.5)).unwrap(), Concrete::Real(3.5));
    let x = ds.graph.assume_constant(MDistr::Delta(Concrete::Real(2.0)));
    let v = ds.value(&Value::sym("plus", Value::pair(Value::Rv(x), Value::Real(1.0)))).unwrap();
    assert_eq!(v, Concrete::Real(3.0));
    assert_eq!(ds.graph.state(x), Some(&NodeState::Realized(Concrete::Real(2.0))));
    assert_eq!(ds.value(&Value::Rv(x)).unwrap(), Concrete::Real(2.0));
    assert_eq!(t.events()[0], TraceEvent::Eval(vec![]));
    assert_eq!(t.events()[1], TraceEvent::Eval(vec![x]));
}

#[test]
fn hl_assume_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut g = DsGraph::new();
    let mut t = Trace::new();
    let mut ds = Ds { graph: &mut g, rng: &mut rng, trace: Some(&mut t) };
    let a = ds.assume(&Value::sym("bernoulli", Value::Real(0.5))).unwrap();
    assert!(matches!(ds.graph.state(a), Some(NodeState::Marginalized { child: None, .. })));

    let y = ds.assume(&gauss(Value::Real(0.0), 1.0)).unwrap();
    let x = ds.assume(&gauss(Value::Rv(y), 1.0)).unwrap();
    assert!(matches!(ds.graph.state(x), Some(NodeState::Initialized { parent, .. }) if *parent == y));

    let p = ds.assume(&Value::sym("beta", Value::pair(Value::Real(1.0), Value::Real(1.0)))).unwrap();
    let q = ds.assume(&Value::sym("beta", Value::pair(Value::Real(1.0), Value::Real(1.0)))).unwrap();
    let c = ds.assume(&Value::sym("bernoulli", Value::sym("mult", Value::pair(Value::Rv(p), Value::Rv(q))))).unwrap();
    assert!(matches!(ds.graph.state(p), Some(NodeState::Realized(_))));
    assert!(matches!(ds.graph.state(q), Some(NodeState::Realized(_))));
    assert!(matches!(ds.graph.state(c), Some(NodeState::Marginalized { child: None, .. })));
    assert!(t.events().contains(&TraceEvent::Assume { child: x, parent: Some(y) }));
}

#[test]
fn hl_observe_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = DsGraph::new();
    let mut t = Trace::new();
    let mut ds = Ds { graph: &mut g, rng: &mut rng, trace: Some(&mut t) };
    let x = ds.assume(&gauss(Value::Real(0.0), 1.0)).unwrap();
    ds.observe(x, &Concrete::Real(1.5)).unwrap();
    assert_eq!(ds.graph.state(x), Some(&NodeState::Realized(Concrete::Real(1.5))));

    let p = ds.assume(&gauss(Value::Real(0.0), 1.0)).unwrap();
    let y = ds.assume(&gauss(Value::Rv(p), 1.0)).unwrap();
    ds.observe(y, &Concrete::Real(2.0)).unwrap();
    ds.graph.force_condition(p).unwrap();
    let (m, v) = match ds.graph.state(p) {
        Some(NodeState::Marginalized { m, .. }) => gaussian_params(m),
        other => panic!("{other:?}"),
    };
    assert!((m - 1.0).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
    assert_eq!(t.events().last(), Some(&TraceEvent::Obs(y)));
}

#[test]
fn reachable_examples() {
    // A lone marginalized state variable next to unrelated realized nodes.
    let mut g = DsGraph::new();
    let x = g.assume_constant(n01());
    let y = g.assume_constant(n01());
    g.realize(y, Concrete::Real(0.0)).unwrap();
    assert_eq!(g.reachable(&ids(&[x.0])), ids(&[x.0]));

    // i marginalized with a marginalized child pre_x, and x initialized
    // under pre_x.
    let mut g = DsGraph::new();
    let i = g.assume_constant(n01());
    let pre_x = g.assume_conditional(i, unit_mean()).unwrap();
    g.marginalize(pre_x).unwrap();
    let x = g.assume_conditional(pre_x, unit_mean()).unwrap();
    assert_eq!(g.reachable(&ids(&[i.0, x.0])), ids(&[i.0, pre_x.0, x.0]));
    assert!(g.reachable(&BTreeSet::new()).is_empty());
}

#[test]
fn marginalized_chain_profile() {
    let mut g = DsGraph::new();
    let i = g.assume_constant(n01());
    let mut prev = i;
    for _ in 0..3 {
        let x = g.assume_conditional(prev, unit_mean()).unwrap();
        g.marginalize(x).unwrap();
        prev = x;
    }
    assert_eq!(g.chain_profile(), (0, 3));
    assert_eq!(g.classify(i), ChainShape::Marginalized);
}

// Grafting an initialized child adds a pointer from its marginalized
// parent, so the parent can reach more after an observe.
#[test]
fn observe_can_extend_reachability_from_a_parent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = DsGraph::new();
    let mut ds = Ds { graph: &mut g, rng: &mut rng, trace: None };
    let x = ds.assume(&gauss(Value::Real(0.0), 1.0)).unwrap();
    let y = ds.assume(&gauss(Value::Rv(x), 1.0)).unwrap();
    let z = ds.assume(&gauss(Value::Rv(y), 1.0)).unwrap();
    assert_eq!(ds.graph.reachable(&ids(&[x.0])), ids(&[x.0]));
    ds.observe(z, &Concrete::Real(0.0)).unwrap();
    assert_eq!(ds.graph.reachable(&ids(&[x.0])), ids(&[x.0, y.0, z.0]));
}

fn posterior_fixture(children: &[(f64, f64, f64, f64)], m0: f64, v0: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut g = DsGraph::new();
    let mut ds = Ds { graph: &mut g, rng: &mut rng, trace: None };
    let root = ds.assume(&gauss(Value::Real(m0), v0)).unwrap();
    for (s, t, v, y) in children {
        let mean = Value::sym(
            "plus",
            Value::pair(Value::sym("mult", Value::pair(Value::Real(*s), Value::Rv(root))), Value::Real(*t)),
        );
        let c = ds.assume(&gauss(mean, *v)).unwrap();
        ds.observe(c, &Concrete::Real(*y)).unwrap();
    }
    ds.graph.force_condition(root).unwrap();
    match ds.graph.state(root) {
        Some(NodeState::Marginalized { m, .. }) => gaussian_params(m),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_ops_preserve_graph_invariants(seed: u64, len in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = OpRunner::new();
        let roots: BTreeSet<NodeId> = (0..4).map(NodeId).collect();
        for _ in 0..len {
            let op = random_op(&mut rng);
            let before_len = r.graph.len();
            let before = r.graph.clone();
            let before_reach = before.reachable(&roots);
            r.apply(&op, &mut rng);
            prop_assert!(r.graph.check_links().is_ok(), "{}", r.graph.dump());
            for x in r.graph.node_ids() {
                prop_assert_ne!(r.graph.classify(x), ChainShape::Invalid);
            }
            match op {
                Op::Observe(_) | Op::Value(_) => {
                    prop_assert_eq!(r.graph.len(), before_len);
                    for x in r.graph.reachable(&roots).difference(&before_reach) {
                        prop_assert!(matches!(before.state(*x), Some(NodeState::Initialized { .. })), "{}", x);
                    }
                }
                _ => prop_assert_eq!(r.graph.len(), before_len + 1),
            }
        }
        prop_assert!(r.trace.well_formed());
        for e in r.trace.iter() {
            let xs = match e {
                TraceEvent::Obs(x) => vec![*x],
                TraceEvent::Eval(xs) => xs.clone(),
                TraceEvent::Assume { .. } => vec![],
            };
            for x in xs {
                prop_assert!(matches!(r.graph.state(x), Some(NodeState::Realized(_))));
            }
        }
    }

    #[test]
    fn observed_children_give_exact_posterior(
        m0 in -3.0..3.0f64, v0 in 0.2..4.0f64,
        children in proptest::collection::vec((-2.0..2.0f64, -1.0..1.0f64, 0.2..3.0f64, -3.0..3.0f64), 1..4),
    ) {
        let (m, v) = posterior_fixture(&children, m0, v0);
        let sd = v0.sqrt();
        let (om, ov) = moments_of(
            |x| normal_pdf(x, m0, v0) * children.iter().map(|(s, t, v, y)| normal_pdf(*y, s * x + t, *v)).product::<f64>(),
            m0 - 10.0 * sd,
            m0 + 10.0 * sd,
        );
        prop_assert!((m - om).abs() < 1e-6, "mean {} vs {}", m, om);
        prop_assert!((v - ov).abs() < 1e-6, "var {} vs {}", v, ov);
    }
}
