//! Seeded random mock worlds and the self-check suites run by `bench`.
//!
//! The oracle here enumerates every complete plan of a world directly from
//! the tree and scores it in closed form; it shares no code with the
//! decoder beyond the world accessors.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::decoder::{decode, decode_batch, DecodeParams};
use crate::plan::PlanningInstance;
use crate::scorer::mock::{MockWorld, NodeSpec, ROOT};
use crate::scorer::ScorerBundle;
use crate::seed::SeedMixer;

#[derive(Debug, Clone, Copy)]
pub struct WorldShape {
    pub max_depth: usize,
    pub max_branching: usize,
    pub max_complete_plans: usize,
}

impl Default for WorldShape {
    fn default() -> Self {
        Self {
            max_depth: 5,
            max_branching: 4,
            max_complete_plans: 500,
        }
    }
}

fn grow(
    rng: &mut impl Rng,
    shape: &WorldShape,
    path: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, NodeSpec)>,
) {
    let depth = path.len();
    if depth >= shape.max_depth {
        return;
    }
    let min_children = usize::from(depth == 0);
    // thin out deeper levels so trees stay within the plan budget more often
    let max_children = if depth >= 2 && rng.gen_bool(0.35) { 0 } else { shape.max_branching };
    let children = rng.gen_range(min_children..=max_children.max(min_children));
    if children == 0 {
        return;
    }
    let mass = if depth == 0 || rng.gen_bool(0.5) {
        1.0
    } else {
        rng.gen_range(0.5..0.95)
    };
    let weights: Vec<f64> = (0..children).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for (i, w) in weights.iter().enumerate() {
        path.push(i);
        let validity = match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0),
        };
        let name = path.iter().map(usize::to_string).collect::<Vec<_>>().join(".");
        out.push((
            path.clone(),
            NodeSpec {
                step: format!("step {name}"),
                prob: (w / total * mass).min(1.0),
                validity,
            },
        ));
        grow(rng, shape, path, out);
        path.pop();
    }
}

/// A random world within `shape`; redraws until the plan budget holds.
pub fn random_world(seed: u64, shape: &WorldShape) -> MockWorld {
    for attempt in 0u64.. {
        let mut rng = SeedMixer::new(seed).u64(attempt).rng();
        let mut entries = Vec::new();
        grow(&mut rng, shape, &mut Vec::new(), &mut entries);
        let world = MockWorld::from_entries(Some("reach the end of the tree".into()), entries)
            .expect("generated worlds are well formed");
        if count_complete_plans(&world) <= shape.max_complete_plans {
            return world;
        }
    }
    unreachable!()
}

/// Number of non-empty plans that can end (nodes with end-of-plan mass).
pub fn count_complete_plans(world: &MockWorld) -> usize {
    (1..world.node_count()).filter(|&id| world.residual(id) > 0.0).count()
}

/// Largest number of candidates any node offers, counting end-of-plan.
pub fn max_candidates(world: &MockWorld) -> usize {
    (0..world.node_count())
        .map(|id| world.children(id).len() + usize::from(id != ROOT && world.residual(id) > 0.0))
        .max()
        .unwrap_or(1)
        .max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPlan {
    pub steps: Vec<String>,
    pub value: f64,
}

/// Every complete plan with its value, in depth-first order.
pub fn enumerate_complete_plans(world: &MockWorld, alpha: f64, epsilon: f64) -> Vec<ScoredPlan> {
    let mut out = Vec::new();
    // (node, steps, loglik, last validity)
    let mut stack: Vec<(usize, Vec<String>, f64, f64)> = vec![(ROOT, Vec::new(), 0.0, 1.0)];
    while let Some((id, steps, ll, last_validity)) = stack.pop() {
        let r = world.residual(id);
        if id != ROOT && r > 0.0 {
            let tokens = steps.len() as f64 + 1.0;
            let norm = (ll + r.ln()) / tokens;
            let v = if alpha >= 1.0 {
                alpha * norm
            } else {
                alpha * norm + (1.0 - alpha) * last_validity.clamp(epsilon, 1.0).ln()
            };
            out.push(ScoredPlan {
                steps: steps.clone(),
                value: v,
            });
        }
        for &c in world.children(id).iter().rev() {
            let node = world.node(c);
            let mut s = steps.clone();
            s.push(node.step.clone());
            stack.push((c, s, ll + node.prob.ln(), node.validity));
        }
    }
    out
}

/// Plans whose value is within `tol` of the maximum.
pub fn argmax_plans(plans: &[ScoredPlan], tol: f64) -> Vec<&ScoredPlan> {
    let best = plans.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    plans.iter().filter(|p| p.value >= best - tol).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub suite: String,
    pub cases: usize,
    pub passed: usize,
    pub failures: Vec<String>,
    #[serde(serialize_with = "ser_secs")]
    pub elapsed: Duration,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl BenchReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.passed == self.cases
    }
}

fn world_instance(world: &MockWorld, id: &str) -> PlanningInstance {
    PlanningInstance::planning(id, world.goal().unwrap_or("reach the end of the tree")).expect("valid goal")
}

/// Params under which decoding must reproduce the exhaustive argmax.
pub fn oracle_params(world: &MockWorld, alpha: f64) -> DecodeParams {
    let k = count_complete_plans(world).max(1);
    let n = max_candidates(world);
    DecodeParams {
        max_steps: 8,
        ..DecodeParams::greedy(alpha, k, n)
    }
}

/// Decodes `cases` random worlds and compares with exhaustive enumeration.
pub fn oracle_suite(seed: u64, cases: usize, alpha: f64) -> BenchReport {
    let start = Instant::now();
    let shape = WorldShape::default();
    let mut failures = Vec::new();
    for case in 0..cases {
        let world = random_world(SeedMixer::new(seed).u64(case as u64).finish(), &shape);
        let params = oracle_params(&world, alpha);
        let bundle = ScorerBundle::from_shared(std::sync::Arc::new(world.clone()));
        let plans = enumerate_complete_plans(&world, alpha, params.epsilon);
        let best = argmax_plans(&plans, 1e-12);
        match decode(&world_instance(&world, "bench"), &bundle, &params) {
            Ok(out) => {
                let got = out.plan.texts();
                if !out.plan.is_terminal() || !best.iter().any(|p| p.steps == got) {
                    failures.push(format!("case {case}: decoded {got:?}, oracle best {:?}", best[0].steps));
                }
            }
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    BenchReport {
        suite: "oracle".into(),
        cases,
        passed: cases - failures.len(),
        failures,
        elapsed: start.elapsed(),
    }
}

/// Checks decode_batch output is identical across thread counts.
pub fn determinism_suite(seed: u64, cases: usize) -> BenchReport {
    let start = Instant::now();
    let shape = WorldShape::default();
    let mut failures = Vec::new();
    for case in 0..cases {
        let world = random_world(SeedMixer::new(seed).u64(case as u64).u64(1).finish(), &shape);
        let bundle = ScorerBundle::from_shared(std::sync::Arc::new(world.clone()));
        let instances: Vec<PlanningInstance> = (0..4).map(|i| world_instance(&world, &format!("i{i}"))).collect();
        let params = DecodeParams {
            seed: case as u64,
            ..DecodeParams::default()
        };
        let render = |p: usize| {
            decode_batch(&instances, &bundle, &params, p)
                .into_iter()
                .map(|r| match r {
                    Ok(o) => serde_json::to_string(&o).expect("output serialises"),
                    Err(e) => format!("error: {e}"),
                })
                .collect::<Vec<_>>()
        };
        let reference = render(1);
        for p in [4, 8] {
            if render(p) != reference {
                failures.push(format!("case {case}: parallelism {p} differs from 1"));
            }
        }
    }
    BenchReport {
        suite: "determinism".into(),
        cases,
        passed: cases - failures.len(),
        failures,
        elapsed: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_worlds_respect_shape() {
        let shape = WorldShape::default();
        for seed in 0..30 {
            let w = random_world(seed, &shape);
            assert!(count_complete_plans(&w) <= 500);
            assert!(count_complete_plans(&w) >= 1);
            assert!(max_candidates(&w) <= 5);
            let plans = enumerate_complete_plans(&w, 0.75, 1e-6);
            assert_eq!(plans.len(), count_complete_plans(&w));
            assert!(plans.iter().all(|p| p.steps.len() <= 5 && p.value.is_finite()));
        }
    }

    #[test]
    fn small_oracle_suite_passes() {
        let r = oracle_suite(3, 10, 0.75);
        assert!(r.ok(), "{:?}", r.failures);
    }
}
