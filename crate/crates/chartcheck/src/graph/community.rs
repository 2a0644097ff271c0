//! Hierarchical community detection over the patient graph.
//!
//! Leiden-style optimization: seeded local moving over modularity with a
//! configurable resolution, a refinement phase constrained to parent
//! communities, then aggregation, repeated until the partition stops
//! coarsening. Level 0 is the finest partition; every entity belongs to
//! exactly one community per level. Determinism comes from the seeded node
//! order and index-based tie-breaking.

use super::{Community, GraphError, PatientGraph};
use crate::llm::{prompts, ChatRequest, LlmClient};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

const MAX_SWEEPS: usize = 10;

struct Adjacency {
    n: usize,
    /// Sorted neighbor lists; self-loops allowed (from aggregation).
    adj: Vec<Vec<(usize, f64)>>,
    /// Weighted degree (self-loops count twice).
    degree: Vec<f64>,
    /// Total edge weight m (each undirected edge once).
    total: f64,
}

impl Adjacency {
    fn from_graph(graph: &PatientGraph) -> (Self, Vec<String>) {
        let ids: Vec<String> = graph.entities.keys().cloned().collect();
        let index: BTreeMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut pair_weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for r in &graph.relations {
            let (a, b) = (index[r.src.as_str()], index[r.dst.as_str()]);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            // distinct endpoint pairs contribute unit weight once
            pair_weights.entry(key).or_insert(1.0);
        }
        let n = ids.len();
        let mut adj = vec![Vec::new(); n];
        let mut degree = vec![0.0; n];
        let mut total = 0.0;
        for (&(a, b), &w) in &pair_weights {
            adj[a].push((b, w));
            adj[b].push((a, w));
            degree[a] += w;
            degree[b] += w;
            total += w;
        }
        for list in &mut adj {
            list.sort_by_key(|x| x.0);
        }
        (
            Adjacency {
                n,
                adj,
                degree,
                total,
            },
            ids,
        )
    }
}

/// Canonical renumbering: communities numbered by first occurrence.
fn canonicalize(assignment: &[usize]) -> Vec<usize> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    assignment
        .iter()
        .map(|&c| {
            *map.entry(c).or_insert_with(|| {
                let v = next;
                next += 1;
                v
            })
        })
        .collect()
}

fn community_count(assignment: &[usize]) -> usize {
    assignment.iter().collect::<std::collections::BTreeSet<_>>().len()
}

/// One phase of greedy modularity moves. `restrict` limits candidate
/// communities to those inside the same parent community (refinement).
fn local_moving(
    adj: &Adjacency,
    mut comm: Vec<usize>,
    resolution: f64,
    rng: &mut ChaCha8Rng,
    restrict: Option<&[usize]>,
) -> Vec<usize> {
    if adj.total <= 0.0 {
        return comm;
    }
    let m = adj.total;
    let mut comm_degree: Vec<f64> = vec![0.0; adj.n];
    for v in 0..adj.n {
        comm_degree[comm[v]] += adj.degree[v];
    }

    let mut order: Vec<usize> = (0..adj.n).collect();
    order.shuffle(rng);

    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for &v in &order {
            let current = comm[v];
            comm_degree[current] -= adj.degree[v];

            // weight from v to each candidate community
            let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
            weights.insert(current, 0.0);
            for &(u, w) in &adj.adj[v] {
                if u == v {
                    continue;
                }
                if let Some(parents) = restrict {
                    if parents[u] != parents[v] {
                        continue;
                    }
                }
                *weights.entry(comm[u]).or_insert(0.0) += w;
            }

            let gain = |c: usize, k_vc: f64| k_vc - resolution * comm_degree[c] * adj.degree[v] / (2.0 * m);
            let mut best = current;
            let mut best_gain = gain(current, weights[&current]);
            for (&c, &k_vc) in &weights {
                if c == current {
                    continue;
                }
                let g = gain(c, k_vc);
                if g > best_gain + 1e-12 || ((g - best_gain).abs() <= 1e-12 && c < best && best != current) {
                    best = c;
                    best_gain = g;
                }
            }

            comm_degree[best] += adj.degree[v];
            if best != current {
                comm[v] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    comm
}

/// Refinement: re-partition each community from singletons, moving only
/// within parent boundaries.
fn refine(adj: &Adjacency, parent: &[usize], resolution: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let singles: Vec<usize> = (0..adj.n).collect();
    local_moving(adj, singles, resolution, rng, Some(parent))
}

/// Collapse refined communities into super-nodes.
fn aggregate(
    adj: &Adjacency,
    refined: &[usize],
    parent: &[usize],
    meta: &[Vec<usize>],
) -> (Adjacency, Vec<Vec<usize>>, Vec<usize>) {
    let refined = canonicalize(refined);
    let r = community_count(&refined);

    let mut meta_new: Vec<Vec<usize>> = vec![Vec::new(); r];
    let mut init: Vec<usize> = vec![0; r];
    for v in 0..adj.n {
        meta_new[refined[v]].extend(meta[v].iter().copied());
        init[refined[v]] = parent[v];
    }
    for members in &mut meta_new {
        members.sort_unstable();
    }
    let init = canonicalize(&init);

    let mut pair_weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for v in 0..adj.n {
        for &(u, w) in &adj.adj[v] {
            if u < v {
                continue; // each undirected edge once (plus self-loops where u == v)
            }
            let (a, b) = (refined[v], refined[u]);
            let key = (a.min(b), a.max(b));
            *pair_weights.entry(key).or_insert(0.0) += w;
        }
    }
    let mut new_adj = vec![Vec::new(); r];
    let mut degree = vec![0.0; r];
    let mut total = 0.0;
    for (&(a, b), &w) in &pair_weights {
        if a == b {
            new_adj[a].push((a, w));
            degree[a] += 2.0 * w;
        } else {
            new_adj[a].push((b, w));
            new_adj[b].push((a, w));
            degree[a] += w;
            degree[b] += w;
        }
        total += w;
    }
    for list in &mut new_adj {
        list.sort_by_key(|x| x.0);
    }
    (
        Adjacency {
            n: r,
            adj: new_adj,
            degree,
            total,
        },
        meta_new,
        init,
    )
}

/// Modularity of an assignment at the given resolution (exposed for tests
/// and reporting).
pub fn modularity(graph: &PatientGraph, assignment: &BTreeMap<String, usize>, resolution: f64) -> f64 {
    let (adj, ids) = Adjacency::from_graph(graph);
    if adj.total <= 0.0 {
        return 0.0;
    }
    let comm: Vec<usize> = ids.iter().map(|id| assignment[id]).collect();
    let m = adj.total;
    let mut intra: BTreeMap<usize, f64> = BTreeMap::new();
    let mut deg: BTreeMap<usize, f64> = BTreeMap::new();
    for v in 0..adj.n {
        *deg.entry(comm[v]).or_insert(0.0) += adj.degree[v];
        for &(u, w) in &adj.adj[v] {
            if u > v && comm[u] == comm[v] {
                *intra.entry(comm[v]).or_insert(0.0) += w;
            }
        }
    }
    deg.keys()
        .map(|c| {
            let l = intra.get(c).copied().unwrap_or(0.0);
            let d = deg[c];
            l / m - resolution * (d / (2.0 * m)).powi(2)
        })
        .sum()
}

/// Detect the community hierarchy. Deterministic for a given seed.
pub fn detect_communities(graph: &PatientGraph, seed: u64, resolution: f64) -> Vec<Community> {
    let (mut adj, ids) = Adjacency::from_graph(graph);
    let n = ids.len();
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut levels: Vec<Vec<usize>> = Vec::new();
    let mut meta: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut init: Vec<usize> = (0..n).collect();

    loop {
        let partition = local_moving(&adj, init.clone(), resolution, &mut rng, None);
        let refined = refine(&adj, &partition, resolution, &mut rng);

        push_level(&mut levels, originals(&refined, &meta, n));
        push_level(&mut levels, originals(&partition, &meta, n));

        let groups = community_count(&partition);
        if groups == adj.n || groups <= 1 {
            break;
        }
        let (next_adj, next_meta, next_init) = aggregate(&adj, &refined, &partition, &meta);
        if next_adj.n >= adj.n {
            break;
        }
        adj = next_adj;
        meta = next_meta;
        init = next_init;
    }

    levels
        .iter()
        .enumerate()
        .flat_map(|(level, assignment)| {
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (v, &c) in assignment.iter().enumerate() {
                groups.entry(c).or_default().push(v);
            }
            groups
                .into_iter()
                .enumerate()
                .map(|(k, (_, members))| Community {
                    id: format!("L{level}.{k}"),
                    level: level as u32,
                    member_entity_ids: members.iter().map(|&v| ids[v].clone()).collect(),
                    summary: String::new(),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn originals(assignment: &[usize], meta: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for (v, &c) in assignment.iter().enumerate() {
        for &orig in &meta[v] {
            out[orig] = c;
        }
    }
    canonicalize(&out)
}

fn push_level(levels: &mut Vec<Vec<usize>>, assignment: Vec<usize>) {
    if levels.last() != Some(&assignment) {
        levels.push(assignment);
    }
}

/// Fill in community summaries: extractive concatenation of member names
/// when no backend is given, otherwise one summarize call per community.
pub fn summarize_communities(
    graph: &mut PatientGraph,
    llm: Option<&LlmClient>,
) -> Result<(), GraphError> {
    let name_of: BTreeMap<String, String> = graph
        .entities
        .iter()
        .map(|(id, e)| (id.clone(), e.canonical_name.clone()))
        .collect();
    let mut summaries: Vec<String> = Vec::with_capacity(graph.communities.len());
    for community in &graph.communities {
        let mut names: Vec<&str> = community
            .member_entity_ids
            .iter()
            .filter_map(|id| name_of.get(id).map(String::as_str))
            .collect();
        names.sort_unstable();
        let members = names.join(", ");
        let summary = match llm {
            None => format!("Entities: {members}"),
            Some(client) => {
                let prompt = prompts::COMMUNITY_SUMMARY.render(&[("members", members.as_str())]);
                let request = ChatRequest::new(&prompts::COMMUNITY_SUMMARY.asset_ref(), prompt, 0.0)
                    .tag("stage", "summarize")
                    .tag("patient_id", &graph.patient_id)
                    .tag("community", &community.id);
                client.complete(&request)?.trim().to_string()
            }
        };
        summaries.push(summary);
    }
    for (community, summary) in graph.communities.iter_mut().zip(summaries) {
        community.summary = summary;
    }
    Ok(())
}
