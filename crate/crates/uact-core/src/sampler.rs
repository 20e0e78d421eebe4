//! Stratified trajectory sampling with a fixed single-arm budget, plus the
//! long-tail balance metrics used to compare strategies (Gini coefficient,
//! Lorenz curve, Coverage@T, rank–probability).
//!
//! Weights live on the bimanual pool under one of four strategies
//! (trajectory-, task-, embodiment-uniform, or dual-weighted by the inverse
//! task x embodiment product); the single-arm pool is always internally
//! trajectory-uniform and receives exactly `single_arm_budget` of the total
//! mass whenever both pools are non-empty. Draws are i.i.d. with
//! replacement, keyed by (seed, draw index) through the counter RNG, so a
//! plan is bitwise reproducible at any parallelism.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EpisodeHeader;
use crate::rng;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("cannot sample from an empty corpus")]
    EmptyIndex,
    #[error("single-arm budget {0} is outside [0, 1]")]
    BadBudget(f64),
    #[error("corpus has no bimanual trajectories; a single-arm budget below 1 is unsatisfiable")]
    NoBimanualPool,
    #[error("metric requires a non-empty distribution")]
    EmptyDistribution,
}

/// Sampling strategy over the bimanual pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TrajectoryUniform,
    TaskUniform,
    EmbodimentUniform,
    DualWeighted,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::TrajectoryUniform => "trajectory_uniform",
            Strategy::TaskUniform => "task_uniform",
            Strategy::EmbodimentUniform => "embodiment_uniform",
            Strategy::DualWeighted => "dual_weighted",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "trajectory_uniform" => Ok(Strategy::TrajectoryUniform),
            "task_uniform" => Ok(Strategy::TaskUniform),
            "embodiment_uniform" => Ok(Strategy::EmbodimentUniform),
            "dual_weighted" => Ok(Strategy::DualWeighted),
            other => Err(format!(
                "unknown strategy '{other}' (expected trajectory-uniform, task-uniform, \
                 embodiment-uniform, or dual-weighted)"
            )),
        }
    }
}

/// One trajectory's stratum labels.
#[derive(Clone, Debug)]
pub struct StratumRecord {
    pub id: String,
    pub dataset: String,
    pub embodiment: String,
    pub task: String,
    pub skill: String,
    pub single_arm: bool,
}

/// Per-axis inverted index over a corpus's trajectories.
#[derive(Clone, Debug, Default)]
pub struct StrataIndex {
    pub records: Vec<StratumRecord>,
    pub by_task: BTreeMap<String, Vec<usize>>,
    pub by_embodiment: BTreeMap<String, Vec<usize>>,
    pub by_skill: BTreeMap<String, Vec<usize>>,
}

impl StrataIndex {
    pub fn from_headers(headers: &[EpisodeHeader]) -> Self {
        let records: Vec<StratumRecord> = headers
            .iter()
            .map(|h| StratumRecord {
                id: h.id.clone(),
                dataset: h.dataset.clone(),
                embodiment: h.embodiment.clone(),
                task: h.task.clone(),
                skill: h.skill.clone(),
                single_arm: h.single_arm,
            })
            .collect();
        let mut by_task: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_embodiment: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_skill: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_task.entry(r.task.clone()).or_default().push(i);
            by_embodiment.entry(r.embodiment.clone()).or_default().push(i);
            by_skill.entry(r.skill.clone()).or_default().push(i);
        }
        StrataIndex {
            records,
            by_task,
            by_embodiment,
            by_skill,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// id → skill lookup table for coverage computation.
    pub fn skill_of(&self) -> BTreeMap<String, String> {
        self.records
            .iter()
            .map(|r| (r.id.clone(), r.skill.clone()))
            .collect()
    }
}

/// A reproducible sampling plan: the per-trajectory probability table plus
/// the materialized draw sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub single_arm_budget: f64,
    pub seed: u64,
    pub probabilities: BTreeMap<String, f64>,
    pub draws: Vec<String>,
}

/// Trajectory sampling probabilities under a strategy and single-arm
/// budget. Bimanual mass is `1 - budget` (all of it if there are no
/// single-arm trajectories); the single-arm pool is trajectory-uniform.
pub fn weights_for(
    index: &StrataIndex,
    strategy: Strategy,
    single_arm_budget: f64,
) -> Result<BTreeMap<String, f64>, SamplerError> {
    if index.is_empty() {
        return Err(SamplerError::EmptyIndex);
    }
    if !(0.0..=1.0).contains(&single_arm_budget) || !single_arm_budget.is_finite() {
        return Err(SamplerError::BadBudget(single_arm_budget));
    }
    let single: Vec<usize> = (0..index.records.len())
        .filter(|&i| index.records[i].single_arm)
        .collect();
    let bimanual: Vec<usize> = (0..index.records.len())
        .filter(|&i| !index.records[i].single_arm)
        .collect();

    let (single_mass, bimanual_mass) = if bimanual.is_empty() {
        if single_arm_budget < 1.0 {
            return Err(SamplerError::NoBimanualPool);
        }
        (1.0, 0.0)
    } else if single.is_empty() {
        (0.0, 1.0)
    } else {
        (single_arm_budget, 1.0 - single_arm_budget)
    };

    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    for &i in &single {
        weights.insert(
            index.records[i].id.clone(),
            single_mass / single.len() as f64,
        );
    }

    if !bimanual.is_empty() {
        // Stratum sizes count bimanual members only, so equal-mass strata
        // hold exactly within the pool.
        let mut task_size: BTreeMap<&str, f64> = BTreeMap::new();
        let mut emb_size: BTreeMap<&str, f64> = BTreeMap::new();
        for &i in &bimanual {
            *task_size.entry(index.records[i].task.as_str()).or_insert(0.0) += 1.0;
            *emb_size
                .entry(index.records[i].embodiment.as_str())
                .or_insert(0.0) += 1.0;
        }
        let raw: Vec<f64> = bimanual
            .iter()
            .map(|&i| {
                let r = &index.records[i];
                match strategy {
                    Strategy::TrajectoryUniform => 1.0,
                    Strategy::TaskUniform => 1.0 / task_size[r.task.as_str()],
                    Strategy::EmbodimentUniform => 1.0 / emb_size[r.embodiment.as_str()],
                    Strategy::DualWeighted => {
                        1.0 / (task_size[r.task.as_str()] * emb_size[r.embodiment.as_str()])
                    }
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        for (&i, w) in bimanual.iter().zip(&raw) {
            weights.insert(index.records[i].id.clone(), bimanual_mass * w / total);
        }
    }
    Ok(weights)
}

/// Materializes `t` i.i.d. draws from a probability table. Draw `i` depends
/// only on `(seed, i)` and the table, via inverse-CDF lookup over the
/// table's key order.
pub fn draw_ids(probabilities: &BTreeMap<String, f64>, seed: u64, t: usize) -> Vec<String> {
    let ids: Vec<&String> = probabilities.keys().collect();
    let mut cumulative = Vec::with_capacity(ids.len());
    let mut acc = 0.0;
    for p in probabilities.values() {
        acc += p;
        cumulative.push(acc);
    }
    if ids.is_empty() {
        return Vec::new();
    }
    (0..t)
        .map(|i| {
            let u = rng::unit_f64_at(seed, rng::STREAM_DRAW, i as u64) * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(ids.len() - 1);
            ids[k].clone()
        })
        .collect()
}

/// Builds the full plan: weights plus `t` materialized draws.
pub fn make_plan(
    index: &StrataIndex,
    strategy: Strategy,
    single_arm_budget: f64,
    seed: u64,
    t: usize,
) -> Result<SamplingPlan, SamplerError> {
    let probabilities = weights_for(index, strategy, single_arm_budget)?;
    let draws = draw_ids(&probabilities, seed, t);
    Ok(SamplingPlan {
        schema_version: 1,
        strategy,
        single_arm_budget,
        seed,
        probabilities,
        draws,
    })
}

/// Aggregates a trajectory probability table up to one stratum axis.
pub fn aggregate_by<'a>(
    probabilities: &BTreeMap<String, f64>,
    label_of: impl Fn(&str) -> Option<&'a str>,
) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for (id, p) in probabilities {
        if let Some(label) = label_of(id) {
            *out.entry(label.to_string()).or_insert(0.0) += p;
        }
    }
    out
}

/// Gini coefficient of a discrete distribution via the sorted trapezoid
/// formula; 0 for perfect equality, `1 - 1/n` for a degenerate point mass.
pub fn gini(probabilities: &BTreeMap<String, f64>) -> Result<f64, SamplerError> {
    if probabilities.is_empty() {
        return Err(SamplerError::EmptyDistribution);
    }
    let mut p: Vec<f64> = probabilities.values().copied().collect();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
    // All-equal values have Gini 0 by definition; return it exactly rather
    // than leaving the cancellation to floating-point summation.
    if p.first() == p.last() {
        return Ok(0.0);
    }
    let n = p.len() as f64;
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = p
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 + 1.0) * v)
        .sum();
    Ok((2.0 * weighted - (n + 1.0) * total) / (n * total))
}

/// Discrete Lorenz curve: `n + 1` points from (0,0) to (1,1), x in uniform
/// steps over the ascending-sorted items, y the cumulative mass.
pub fn lorenz_points(probabilities: &BTreeMap<String, f64>) -> Result<Vec<(f64, f64)>, SamplerError> {
    if probabilities.is_empty() {
        return Err(SamplerError::EmptyDistribution);
    }
    let mut p: Vec<f64> = probabilities.values().copied().collect();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
    let n = p.len() as f64;
    let total: f64 = p.iter().sum();
    let mut points = Vec::with_capacity(p.len() + 1);
    points.push((0.0, 0.0));
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        points.push(((i as f64 + 1.0) / n, if total > 0.0 { acc / total } else { 0.0 }));
    }
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0); // close the curve exactly despite roundoff
    }
    Ok(points)
}

/// Coverage curve: element `t` counts the distinct skills among the first
/// `t + 1` draws. Draws missing from the lookup count as their own
/// singleton skill.
pub fn coverage_at(draws: &[String], skill_of: &BTreeMap<String, String>) -> Vec<usize> {
    let mut seen: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(draws.len());
    for d in draws {
        let skill = skill_of.get(d).map(|s| s.as_str()).unwrap_or(d.as_str());
        seen.insert(skill);
        out.push(seen.len());
    }
    out
}

/// Descending rank–probability pairs with 1-based ranks.
pub fn rank_probability(
    probabilities: &BTreeMap<String, f64>,
) -> Result<Vec<(usize, f64)>, SamplerError> {
    if probabilities.is_empty() {
        return Err(SamplerError::EmptyDistribution);
    }
    let mut p: Vec<f64> = probabilities.values().copied().collect();
    p.sort_by(|a, b| b.partial_cmp(a).expect("finite probabilities"));
    Ok(p.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect())
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn trajectory_uniform_is_flat() {
        let idx = StrataIndex::from_headers(&headers(&[
            ("a", "t1", "s1", "e1", false),
            ("b", "t1", "s1", "e1", false),
            ("c", "t2", "s2", "e2", false),
        ]));
        let w = weights_for(&idx, Strategy::TrajectoryUniform, 0.0).unwrap();
        for p in w.values() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn task_uniform_gives_each_task_equal_mass() {
        let idx = StrataIndex::from_headers(&headers(&[
            ("a1", "A", "s", "e", false),
            ("a2", "A", "s", "e", false),
            ("b1", "B", "s", "e", false),
        ]));
        let w = weights_for(&idx, Strategy::TaskUniform, 0.0).unwrap();
        assert!((w["a1"] - 0.25).abs() < 1e-15);
        assert!((w["a2"] - 0.25).abs() < 1e-15);
        assert!((w["b1"] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn per_task_mass_is_uniform_on_the_skewed_corpus() {
        let idx = StrataIndex::from_headers(&skewed_corpus());
        let w = weights_for(&idx, Strategy::TaskUniform, 0.5).unwrap();
        // No single-arm pool: all mass goes to the bimanual side.
        let total: f64 = w.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mut per_task: BTreeMap<&str, f64> = BTreeMap::new();
        for (id, p) in &w {
            let task = &id[..id.rfind('_').unwrap()];
            *per_task.entry(task).or_insert(0.0) += p;
        }
        for (task, mass) in per_task {
            assert!((mass - 1.0 / 3.0).abs() < 1e-12, "{task}: {mass}");
        }
    }

    #[test]
    fn embodiment_uniform_equalizes_embodiments() {
        let idx = StrataIndex::from_headers(&headers(&[
            ("a", "t1", "s", "robot_x", false),
            ("b", "t2", "s", "robot_x", false),
            ("c", "t3", "s", "robot_x", false),
            ("d", "t4", "s", "robot_y", false),
        ]));
        let w = weights_for(&idx, Strategy::EmbodimentUniform, 0.0).unwrap();
        let x_mass = w["a"] + w["b"] + w["c"];
        assert!((x_mass - 0.5).abs() < 1e-12);
        assert!((w["d"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dual_weighting_matches_the_product_of_inverses() {
        let idx = StrataIndex::from_headers(&headers(&[
            ("a", "t1", "s", "e1", false),
            ("b", "t1", "s", "e1", false),
            ("c", "t2", "s", "e2", false),
        ]));
        let w = weights_for(&idx, Strategy::DualWeighted, 0.0).unwrap();
        // Raw weights: a,b -> 1/(2*2) = 0.25 each; c -> 1/(1*1) = 1.
        let total = 0.25 + 0.25 + 1.0;
        assert!((w["a"] - 0.25 / total).abs() < 1e-15);
        assert!((w["c"] - 1.0 / total).abs() < 1e-15);
    }

    #[test]
    fn single_arm_pool_gets_exactly_the_budget() {
        let idx = StrataIndex::from_headers(&headers(&[
            ("bi1", "t1", "s", "e", false),
            ("bi2", "t2", "s", "e", false),
            ("sa1", "t3", "s", "e", true),
            ("sa2", "t4", "s", "e", true),
            ("sa3", "t5", "s", "e", true),
        ]));
        for strategy in [
            Strategy::TrajectoryUniform,
            Strategy::TaskUniform,
            Strategy::EmbodimentUniform,
            Strategy::DualWeighted,
        ] {
            let w = weights_for(&idx, strategy, 0.5).unwrap();
            let single_mass = w["sa1"] + w["sa2"] + w["sa3"];
            assert!((single_mass - 0.5).abs() < 1e-12, "{strategy:?}");
            assert!((w["sa1"] - w["sa3"]).abs() < 1e-15, "uniform inside the pool");
            let total: f64 = w.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_single_arm_pool_reassigns_its_budget() {
        let idx = StrataIndex::from_headers(&headers(&[("a", "t", "s", "e", false)]));
        let w = weights_for(&idx, Strategy::TrajectoryUniform, 0.5).unwrap();
        assert!((w["a"] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_bimanual_pool_with_partial_budget_is_rejected() {
        let idx = StrataIndex::from_headers(&headers(&[("a", "t", "s", "e", true)]));
        assert!(matches!(
            weights_for(&idx, Strategy::TrajectoryUniform, 0.5),
            Err(SamplerError::NoBimanualPool)
        ));
        let w = weights_for(&idx, Strategy::TrajectoryUniform, 1.0).unwrap();
        assert!((w["a"] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_index_is_rejected() {
        let idx = StrataIndex::from_headers(&[]);
        assert!(matches!(
            weights_for(&idx, Strategy::TaskUniform, 0.5),
            Err(SamplerError::EmptyIndex)
        ));
    }

    #[test]
    fn draws_are_deterministic_and_sized() {
        let idx = StrataIndex::from_headers(&headers(&[
            ("a", "t1", "s", "e", false),
            ("b", "t2", "s", "e", false),
        ]));
        let p1 = make_plan(&idx, Strategy::TaskUniform, 0.0, 42, 100).unwrap();
        let p2 = make_plan(&idx, Strategy::TaskUniform, 0.0, 42, 100).unwrap();
        assert_eq!(p1.draws, p2.draws);
        assert_eq!(p1.draws.len(), 100);
        let p3 = make_plan(&idx, Strategy::TaskUniform, 0.0, 43, 100).unwrap();
        assert_ne!(p1.draws, p3.draws, "different seeds diverge");
    }

    #[test]
    fn zero_draws_yield_an_empty_plan() {
        let idx = StrataIndex::from_headers(&headers(&[("a", "t", "s", "e", false)]));
        let plan = make_plan(&idx, Strategy::TrajectoryUniform, 0.0, 7, 0).unwrap();
        assert!(plan.draws.is_empty());
    }

    #[test]
    fn single_trajectory_repeats_forever() {
        let idx = StrataIndex::from_headers(&headers(&[("only", "t", "s", "e", false)]));
        let plan = make_plan(&idx, Strategy::TrajectoryUniform, 0.0, 3, 50).unwrap();
        assert!(plan.draws.iter().all(|d| d == "only"));
    }

    #[test]
    fn draw_frequencies_track_the_table() {
        let p = map(&[("x", 0.8), ("y", 0.2)]);
        let draws = draw_ids(&p, 11, 20_000);
        let x = draws.iter().filter(|d| *d == "x").count() as f64 / 20_000.0;
        assert!((x - 0.8).abs() < 0.01, "empirical {x}");
    }

    #[test]
    fn gini_of_uniform_is_zero() {
        let p = map(&[("a", 0.25), ("b", 0.25), ("c", 0.25), ("d", 0.25)]);
        assert_eq!(gini(&p).unwrap(), 0.0);
    }

    #[test]
    fn gini_of_degenerate_four_point_mass_is_three_quarters() {
        let p = map(&[("a", 1.0), ("b", 0.0), ("c", 0.0), ("d", 0.0)]);
        assert!((gini(&p).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gini_matches_the_pairwise_oracle() {
        for trial in 0..100u64 {
            let n = 2 + (rng::u64_at(99, 7, trial) % 40) as usize;
            let mut p = BTreeMap::new();
            let mut total = 0.0;
            for k in 0..n {
                let v = rng::unit_f64_at(99, 8, trial * 64 + k as u64);
                total += v;
                p.insert(format!("k{k}"), v);
            }
            for v in p.values_mut() {
                *v /= total;
            }
            let fast = gini(&p).unwrap();
            let slow = gini_pairwise(&p);
            assert!((fast - slow).abs() < 1e-12, "trial {trial}: {fast} vs {slow}");
            assert!((0.0..=1.0 - 1.0 / n as f64 + 1e-15).contains(&fast));
        }
    }

    #[test]
    fn lorenz_endpoints_and_shape() {
        let p = map(&[("a", 0.9), ("b", 0.1)]);
        let pts = lorenz_points(&p).unwrap();
        assert_eq!(pts[0], (0.0, 0.0));
        assert!((pts[1].0 - 0.5).abs() < 1e-15 && (pts[1].1 - 0.1).abs() < 1e-15);
        assert_eq!(pts[2], (1.0, 1.0));
    }

    #[test]
    fn lorenz_uniform_is_the_diagonal() {
        let p = map(&[("a", 0.5), ("b", 0.5)]);
        let pts = lorenz_points(&p).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]);
    }

    #[test]
    fn lorenz_is_monotone_and_convex() {
        let mut p = BTreeMap::new();
        for k in 0..25u64 {
            p.insert(format!("k{k}"), rng::unit_f64_at(5, 9, k) + 1e-3);
        }
        let total: f64 = p.values().sum();
        for v in p.values_mut() {
            *v /= total;
        }
        let pts = lorenz_points(&p).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-15);
        }
        for w in pts.windows(3) {
            let second_diff = (w[2].1 - w[1].1) - (w[1].1 - w[0].1);
            assert!(second_diff >= -1e-12, "convexity violated: {second_diff}");
        }
    }

    #[test]
    fn lorenz_area_cross_checks_gini() {
        for trial in 0..20u64 {
            let mut p = BTreeMap::new();
            let mut total = 0.0;
            for k in 0..30u64 {
                let v = rng::unit_f64_at(17, 10, trial * 64 + k);
                total += v;
                p.insert(format!("k{k}"), v);
            }
            for v in p.values_mut() {
                *v /= total;
            }
            let pts = lorenz_points(&p).unwrap();
            let mut area = 0.0;
            for w in pts.windows(2) {
                area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
            }
            let g = gini(&p).unwrap();
            assert!(
                (area - (1.0 - g) / 2.0).abs() < 1e-12,
                "trial {trial}: area {area}, gini {g}"
            );
        }
    }

    #[test]
    fn coverage_counts_distinct_skills() {
        let skills: BTreeMap<String, String> = [
            ("a", "grasp"),
            ("b", "grasp"),
            ("c", "pour"),
            ("d", "wipe"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        let draws: Vec<String> = ["a", "b", "c", "a", "d"].iter().map(|s| s.to_string()).collect();
        assert_eq!(coverage_at(&draws, &skills), vec![1, 1, 2, 2, 3]);
    }

    #[test]
    fn coverage_is_flat_when_all_draws_share_a_skill() {
        let skills: BTreeMap<String, String> =
            [("a", "s"), ("b", "s")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let draws: Vec<String> = ["a", "b", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(coverage_at(&draws, &skills), vec![1, 1, 1]);
    }

    #[test]
    fn rank_probability_sorts_descending() {
        let p = map(&[("a", 0.2), ("b", 0.5), ("c", 0.3)]);
        let rp = rank_probability(&p).unwrap();
        assert_eq!(rp, vec![(1, 0.5), (2, 0.3), (3, 0.2)]);
    }

    #[test]
    fn metrics_reject_empty_distributions() {
        let empty = BTreeMap::new();
        assert!(gini(&empty).is_err());
        assert!(lorenz_points(&empty).is_err());
        assert!(rank_probability(&empty).is_err());
    }

    #[test]
    fn aggregation_sums_to_skill_masses() {
        let idx = StrataIndex::from_headers(&skewed_corpus());
        let w = weights_for(&idx, Strategy::TaskUniform, 0.5).unwrap();
        let skill_of = idx.skill_of();
        let by_skill = aggregate_by(&w, |id| skill_of.get(id).map(|s| s.as_str()));
        assert_eq!(by_skill.len(), 3);
        for mass in by_skill.values() {
            assert!((mass - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
