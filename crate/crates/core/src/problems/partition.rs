use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, ProblemError};

/// Disjoint, complete assignment of sample indices to agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignments: Vec<Vec<usize>>,
}

impl Partition {
    /// Validate that `assignments` is a disjoint cover of `0..n_samples` with
    /// no empty agent.
    pub fn new(assignments: Vec<Vec<usize>>, n_samples: usize) -> Result<Self, ProblemError> {
        let mut seen = vec![false; n_samples];
        for (agent, set) in assignments.iter().enumerate() {
            if set.is_empty() {
                return Err(ProblemError::InvalidPartition(format!(
                    "agent {agent} holds no samples"
                )));
            }
            for &i in set {
                if i >= n_samples {
                    return Err(ProblemError::InvalidPartition(format!(
                        "sample {i} out of range 0..{n_samples}"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(ProblemError::InvalidPartition(format!(
                        "sample {i} assigned twice"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ProblemError::InvalidPartition(format!(
                "sample {missing} not assigned"
            )));
        }
        Ok(Self { assignments })
    }

    pub fn n_agents(&self) -> usize {
        self.assignments.len()
    }

    pub fn n_samples(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }

    pub fn agent(&self, agent: usize) -> &[usize] {
        &self.assignments[agent]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    /// Number of distinct labels per agent.
    pub fn label_spread(&self, labels: &[usize]) -> Vec<usize> {
        self.assignments
            .iter()
            .map(|set| {
                let mut ls: Vec<usize> = set.iter().map(|&i| labels[i]).collect();
                ls.sort_unstable();
                ls.dedup();
                ls.len()
            })
            .collect()
    }

    /// One line per agent with space-separated sample indices.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        for set in &self.assignments {
            let line: Vec<String> = set.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn parse_dump(text: &str, n_samples: usize) -> Result<Self, ProblemError> {
        let assignments = text
            .lines()
            .map(|line| {
                line.split_whitespace()
                    .map(|tok| {
                        tok.parse::<usize>().map_err(|_| {
                            ProblemError::InvalidPartition(format!("bad index `{tok}`"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(assignments, n_samples)
    }
}

/// Shuffle with `seed`, then deal contiguous chunks; the first `S mod N`
/// agents receive one extra sample.
pub fn partition_iid(ds: &Dataset, n_agents: usize, seed: u64) -> Result<Partition, ProblemError> {
    let s = ds.n_samples();
    if n_agents == 0 || n_agents > s {
        return Err(ProblemError::TooManyAgents {
            agents: n_agents,
            samples: s,
        });
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (s / n_agents, s % n_agents);
    let mut assignments = Vec::with_capacity(n_agents);
    let mut start = 0;
    for agent in 0..n_agents {
        let len = base + usize::from(agent < extra);
        assignments.push(order[start..start + len].to_vec());
        start += len;
    }
    Partition::new(assignments, s)
}

/// Pathological label-skewed split: sort samples by label from high to low,
/// cut into `n_agents * shards_per_agent` equal shards and hand each agent
/// `shards_per_agent` randomly chosen shards.
pub fn partition_noniid_shards(
    ds: &Dataset,
    n_agents: usize,
    shards_per_agent: usize,
    seed: u64,
) -> Result<Partition, ProblemError> {
    let mut shard_order: Vec<usize> = (0..n_agents * shards_per_agent).collect();
    shard_order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    partition_shards_in_order(ds, n_agents, shards_per_agent, &shard_order)
}

/// Deal shards to agents following `shard_order`: agent `n` receives
/// `shard_order[n*k..(n+1)*k]`.
pub(crate) fn partition_shards_in_order(
    ds: &Dataset,
    n_agents: usize,
    shards_per_agent: usize,
    shard_order: &[usize],
) -> Result<Partition, ProblemError> {
    let s = ds.n_samples();
    let n_shards = n_agents * shards_per_agent;
    if n_shards == 0 || !s.is_multiple_of(n_shards) {
        return Err(ProblemError::Divisibility(format!(
            "{s} samples cannot be cut into {n_agents} x {shards_per_agent} equal shards"
        )));
    }
    let shard_len = s / n_shards;
    let mut sorted: Vec<usize> = (0..s).collect();
    // Stable: ties keep ascending sample order.
    sorted.sort_by_key(|&i| std::cmp::Reverse(ds.label(i)));
    let assignments = shard_order
        .chunks(shards_per_agent)
        .map(|shards| {
            shards
                .iter()
                .flat_map(|&sh| sorted[sh * shard_len..(sh + 1) * shard_len].iter().copied())
                .collect()
        })
        .collect();
    Partition::new(assignments, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(labels: &[usize], classes: usize) -> Dataset {
        Dataset::new(vec![0.0; labels.len()], labels.to_vec(), 1, classes).unwrap()
    }

    fn sizes(p: &Partition) -> Vec<usize> {
        p.assignments().iter().map(Vec::len).collect()
    }

    #[test]
    fn iid_singletons() {
        let ds = labelled(&[0, 0, 0, 0], 1);
        let p = partition_iid(&ds, 4, 0).unwrap();
        let mut all: Vec<usize> = p.assignments().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(sizes(&p), vec![1; 4]);
    }

    #[test]
    fn iid_remainder_rule() {
        let ds = labelled(&[0; 10], 1);
        assert_eq!(sizes(&partition_iid(&ds, 3, 1).unwrap()), vec![4, 3, 3]);
        assert!(matches!(
            partition_iid(&ds, 11, 1),
            Err(ProblemError::TooManyAgents { .. })
        ));
    }

    #[test]
    fn iid_even_split_at_scale() {
        let ds = labelled(&vec![0; 60_000], 1);
        assert_eq!(sizes(&partition_iid(&ds, 20, 3).unwrap()), vec![3000; 20]);
    }

    #[test]
    fn shards_in_order_two_class_toy() {
        let ds = labelled(&[0, 1, 0, 1, 0, 1, 0, 1], 2);
        let p = partition_shards_in_order(&ds, 2, 2, &[0, 1, 2, 3]).unwrap();
        assert!(p.agent(0).iter().all(|&i| ds.label(i) == 1));
        assert!(p.agent(1).iter().all(|&i| ds.label(i) == 0));
        assert_eq!(p.label_spread(ds.labels()), vec![1, 1]);
    }

    #[test]
    fn shards_single_agent_holds_everything() {
        let ds = labelled(&[2, 0, 1, 1], 3);
        let p = partition_noniid_shards(&ds, 1, 2, 5).unwrap();
        assert_eq!(p.n_samples(), 4);
        assert_eq!(p.n_agents(), 1);
    }

    #[test]
    fn shards_mnist_scale_label_spread() {
        let labels: Vec<usize> = (0..60_000).map(|i| i % 10).collect();
        let ds = labelled(&labels, 10);
        let p = partition_noniid_shards(&ds, 20, 2, 11).unwrap();
        assert_eq!(sizes(&p), vec![3000; 20]);
        assert!(p.label_spread(&labels).iter().all(|&k| k <= 2));
    }

    #[test]
    fn shards_divisibility_error() {
        let ds = labelled(&[0; 10], 1);
        assert!(matches!(
            partition_noniid_shards(&ds, 3, 2, 0),
            Err(ProblemError::Divisibility(_))
        ));
    }

    #[test]
    fn dump_round_trip() {
        let ds = labelled(&[0; 10], 1);
        let p = partition_iid(&ds, 3, 2).unwrap();
        assert_eq!(Partition::parse_dump(&p.to_dump(), 10).unwrap(), p);
        assert!(Partition::parse_dump("0 1\n1 2\n", 3).is_err());
    }
}
