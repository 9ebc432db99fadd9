//! End-to-end reconstruction: effective weights, decomposition, per-component
//! solving, assembly, reporting and output files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::car::{car_counts, extract_cars, Car, CarCounts};
use crate::dp::{self, ComponentSolution, DpLimits, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::genome::{scj_count, Adjacency};
use crate::graph::{build_global_graph, candidate_adjacencies, connected_components, Component, GlobalAdjacencyGraph};
use crate::ilp::{self, ModelOptions};
use crate::io;
use crate::labeling::{labeling_objective, Labeling, Objective};
use crate::score::{Alpha, Threshold, WeightTable};
use crate::tree::{NodeId, Phylogeny};
use crate::weights::{boltzmann_table, DEFAULT_KT};

/// Which solver handles each component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Dynamic program when the label space fits the cap, branch-and-bound
    /// otherwise.
    #[default]
    Auto,
    /// Dynamic program only; oversized components are an error.
    DpOnly,
    /// Branch-and-bound for every component.
    IlpOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Dp,
    Ilp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum WeightSource {
    /// All weights zero.
    None,
    File { path: PathBuf },
    Boltzmann { kt: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(serialize_with = "display")]
    pub alpha: Alpha,
    #[serde(serialize_with = "display")]
    pub threshold: Threshold,
    pub weights: WeightSource,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(serialize_with = "display")]
    pub cap: u128,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
    pub route: Route,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(x: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(x)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: Alpha::ZERO,
            threshold: Threshold::default(),
            weights: WeightSource::None,
            n_samples: 0,
            seed: 0,
            cap: DEFAULT_CAP,
            threads: None,
            route: Route::Auto,
        }
    }
}

impl RunConfig {
    pub fn boltzmann(kt: Option<f64>) -> WeightSource {
        WeightSource::Boltzmann { kt: kt.unwrap_or(DEFAULT_KT) }
    }
}

/// Builds the raw weight table named by `source`.
pub fn load_weights(phylo: &Phylogeny, source: &WeightSource) -> Result<WeightTable> {
    match source {
        WeightSource::None => Ok(WeightTable::new()),
        WeightSource::File { path } => io::read_weights(path, phylo.tree(), phylo.universe()),
        WeightSource::Boltzmann { kt } => boltzmann_table(phylo, *kt),
    }
}

/// Restricts a weight table to candidate adjacencies at internal nodes that
/// pass the threshold. Entries outside the candidate set cannot be kept by
/// any labeling and would only add a constant.
pub fn effective_weights(phylo: &Phylogeny, raw: &WeightTable, threshold: Threshold) -> WeightTable {
    let candidates = candidate_adjacencies(phylo);
    let mut w = raw.clone();
    w.retain(|v, a, x| candidates.get(&v).is_some_and(|c| c.contains(a)) && threshold.admits(x));
    w
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub index: usize,
    /// Smallest extremity, identifying the component.
    pub first: String,
    pub vertices: usize,
    pub edges: usize,
    pub max_degree: usize,
    #[serde(serialize_with = "display")]
    pub label_space_bound: u128,
    pub solver: Solver,
    pub objective: String,
    /// Absent when the component was solved by branch-and-bound.
    #[serde(serialize_with = "opt_display")]
    pub cooptimal: Option<BigUint>,
}

fn opt_display<T: std::fmt::Display, S: serde::Serializer>(
    x: &Option<T>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(x) => s.collect_str(x),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub name: String,
    pub adjacencies: usize,
    pub cars: CarCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeReport {
    pub parent: String,
    pub child: String,
    pub scj: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    /// Number of markers.
    pub markers: usize,
    /// Largest component, in extremities.
    pub max_component: usize,
    /// Largest extremity degree over all components.
    pub max_degree: usize,
    pub candidates: usize,
    pub graph_edges: usize,
    pub components: Vec<ComponentReport>,
    pub objective: String,
    pub changes: u64,
    /// Discarded weight as a decimal.
    pub discarded_weight: String,
    pub nodes: Vec<NodeReport>,
    pub edges: Vec<EdgeReport>,
    /// Product of the component counts; absent if any component was solved
    /// by branch-and-bound.
    #[serde(serialize_with = "opt_display")]
    pub cooptimal: Option<BigUint>,
    pub samples: usize,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub config: RunConfig,
    pub weights: WeightTable,
    pub graph: GlobalAdjacencyGraph,
    pub labeling: Labeling,
    pub objective: Objective,
    pub samples: Vec<Labeling>,
    pub report: SolveReport,
}

impl SolveOutcome {
    /// Number of samples containing each adjacency at each internal node;
    /// only adjacencies seen at least once.
    pub fn frequencies(&self, phylo: &Phylogeny) -> BTreeMap<(NodeId, Adjacency), usize> {
        let mut out = BTreeMap::new();
        for s in &self.samples {
            for v in phylo.tree().internal_nodes() {
                for a in s.set(v) {
                    *out.entry((v, *a)).or_insert(0) += 1;
                }
            }
        }
        out
    }
}

struct Solved {
    solver: Solver,
    best: ComponentSolution,
    samples: Vec<ComponentSolution>,
}

fn solve_one(
    index: usize,
    component: &Component,
    phylo: &Phylogeny,
    weights: &WeightTable,
    config: &RunConfig,
) -> Result<Solved> {
    let limits = DpLimits { cap: config.cap };
    let use_dp = match config.route {
        Route::Auto => limits.admits(component),
        Route::DpOnly => true,
        Route::IlpOnly => false,
    };
    if use_dp {
        let (best, table) = dp::solve_component(component, phylo, weights, config.alpha, limits)?;
        let samples = if config.n_samples > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);
            table.sample(phylo, weights, config.n_samples, &mut rng, config.seed)?
        } else {
            Vec::new()
        };
        Ok(Solved { solver: Solver::Dp, best, samples })
    } else {
        log::debug!(
            "component {index} ({} extremities) goes to branch-and-bound",
            component.vertices().len()
        );
        let best = ilp::solve_component(component, phylo, weights, config.alpha, ModelOptions::default())?;
        let samples = vec![best.clone(); config.n_samples];
        Ok(Solved { solver: Solver::Ilp, best, samples })
    }
}

fn assemble<'a>(phylo: &Phylogeny, parts: impl Iterator<Item = &'a ComponentSolution>) -> Labeling {
    let mut labeling = Labeling::leaves_only(phylo);
    for part in parts {
        for (v, set) in &part.node_sets {
            labeling.set_mut(*v).extend(set.iter().copied());
        }
    }
    labeling
}

/// Runs the reconstruction on `phylo` with the raw weight table `raw`.
pub fn run_solve(phylo: &Phylogeny, raw: &WeightTable, config: &RunConfig) -> Result<SolveOutcome> {
    let tree = phylo.tree();
    let weights = effective_weights(phylo, raw, config.threshold);
    let dropped = raw.len() - weights.len();
    if dropped > 0 {
        log::info!("{dropped} weight entries are below the threshold or not candidates and were ignored");
    }
    let candidates = candidate_adjacencies(phylo);
    let graph = build_global_graph(phylo, &candidates, &weights, config.threshold);
    let components = connected_components(&graph);
    log::info!("{} graph edges in {} components", graph.edge_count(), components.len());

    let work = || -> Result<Vec<Solved>> {
        components
            .par_iter()
            .enumerate()
            .map(|(i, c)| solve_one(i, c, phylo, &weights, config))
            .collect()
    };
    let solved = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::internal(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    // Leaf adjacencies outside the graph can never be kept at the parent.
    let outside: u64 = tree
        .leaves()
        .filter(|&l| tree.parent(l).is_some())
        .map(|l| phylo.leaf_adjacencies(l).iter().filter(|a| !graph.contains(a)).count() as u64)
        .sum();
    let changes: u64 = solved.iter().map(|s| s.best.objective.changes).sum::<u64>() + outside;
    let discarded: u64 = solved.iter().map(|s| s.best.objective.discarded_micros).sum();
    let objective = Objective::new(config.alpha, changes, discarded);

    let labeling = assemble(phylo, solved.iter().map(|s| &s.best));
    let check = labeling_objective(phylo, &labeling, &weights, config.alpha)?;
    if check != objective {
        return Err(Error::internal(format!(
            "assembled objective {:?} differs from its direct evaluation {:?}",
            objective, check
        )));
    }
    let samples: Vec<Labeling> = (0..config.n_samples)
        .map(|i| assemble(phylo, solved.iter().map(|s| &s.samples[i])))
        .collect();
    for s in &samples {
        if labeling_objective(phylo, s, &weights, config.alpha)?.cost != objective.cost {
            return Err(Error::internal("a sampled labeling is not optimal"));
        }
    }

    let component_reports: Vec<ComponentReport> = components
        .iter()
        .zip(&solved)
        .enumerate()
        .map(|(index, (c, s))| {
            let st = c.stats();
            ComponentReport {
                index,
                first: c.vertices()[0].to_string(),
                vertices: st.vertices,
                edges: c.edges().len(),
                max_degree: st.max_degree,
                label_space_bound: st.label_space_bound,
                solver: s.solver,
                objective: config.alpha.format_cost(s.best.objective.cost),
                cooptimal: s.best.cooptimal.clone(),
            }
        })
        .collect();
    let cooptimal = solved
        .iter()
        .try_fold(BigUint::one(), |acc, s| s.best.cooptimal.as_ref().map(|k| acc * k));
    let nodes = tree
        .internal_nodes()
        .map(|v| {
            let cars = extract_cars(labeling.set(v), phylo.universe())?;
            Ok(NodeReport {
                name: tree.name(v).to_string(),
                adjacencies: labeling.set(v).len(),
                cars: car_counts(&cars),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let edges = tree
        .edges()
        .map(|(u, v)| EdgeReport {
            parent: tree.name(u).to_string(),
            child: tree.name(v).to_string(),
            scj: scj_count(labeling.set(u), labeling.set(v)),
        })
        .collect();
    let report = SolveReport {
        markers: phylo.marker_count(),
        max_component: components.iter().map(|c| c.stats().vertices).max().unwrap_or(0),
        max_degree: components.iter().map(|c| c.stats().max_degree).max().unwrap_or(0),
        candidates: candidates.values().next().map_or(0, BTreeSet::len),
        graph_edges: graph.edge_count(),
        components: component_reports,
        objective: config.alpha.format_cost(objective.cost),
        changes: objective.changes,
        discarded_weight: Alpha::ONE.format_cost(objective.discarded_micros),
        nodes,
        edges,
        cooptimal,
        samples: config.n_samples,
    };
    Ok(SolveOutcome { config: config.clone(), weights, graph, labeling, objective, samples, report })
}

/// CARs of every internal node, in node order.
pub fn ancestral_cars(phylo: &Phylogeny, labeling: &Labeling) -> Result<Vec<(NodeId, Vec<Car>)>> {
    phylo
        .tree()
        .internal_nodes()
        .map(|v| Ok((v, extract_cars(labeling.set(v), phylo.universe())?)))
        .collect()
}

/// Paths of the files written by [`write_outputs`].
pub const CARS_FILE: &str = "cars.tsv";
pub const STATS_FILE: &str = "stats.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const COMPONENTS_FILE: &str = "components.tsv";
pub const FREQUENCIES_FILE: &str = "frequencies.tsv";
pub const SAMPLES_FILE: &str = "samples.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    inputs: &'a BTreeMap<String, String>,
    config: &'a RunConfig,
    report: &'a SolveReport,
    files: Vec<&'static str>,
}

/// Writes the output files of a run into `dir`. `inputs` are echoed into
/// the manifest (for instance the input paths as given).
pub fn write_outputs(
    phylo: &Phylogeny,
    outcome: &SolveOutcome,
    inputs: &BTreeMap<String, String>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tree = phylo.tree();
    let alpha = outcome.config.alpha;
    let report = &outcome.report;

    let mut cars = String::new();
    for (v, list) in ancestral_cars(phylo, &outcome.labeling)? {
        cars.push_str(&io::format_cars(tree.name(v), &list));
    }
    std::fs::write(dir.join(CARS_FILE), cars)?;

    let mut stats = String::new();
    let _ = writeln!(stats, "# alpha\t{alpha}");
    let _ = writeln!(stats, "# threshold\t{}", outcome.config.threshold);
    let _ = writeln!(stats, "# objective\t{}", report.objective);
    let _ = writeln!(stats, "# scj\t{}", report.changes);
    let _ = writeln!(stats, "# discarded_weight\t{}", report.discarded_weight);
    let _ = writeln!(
        stats,
        "# cooptimal\t{}",
        report.cooptimal.as_ref().map_or_else(|| "unknown".to_string(), |c| c.to_string())
    );
    let _ = writeln!(stats, "# markers\t{}", report.markers);
    let _ = writeln!(stats, "# max_component\t{}", report.max_component);
    let _ = writeln!(stats, "# max_degree\t{}", report.max_degree);
    let _ = writeln!(stats, "node\tadjacencies\tcars\tnon_singleton_cars");
    for n in &report.nodes {
        let _ = writeln!(stats, "{}\t{}\t{}\t{}", n.name, n.adjacencies, n.cars.total, n.cars.non_singleton);
    }
    std::fs::write(dir.join(STATS_FILE), stats)?;

    let mut edges = String::from("parent\tchild\tscj\n");
    for e in &report.edges {
        let _ = writeln!(edges, "{}\t{}\t{}", e.parent, e.child, e.scj);
    }
    std::fs::write(dir.join(EDGES_FILE), edges)?;

    let mut comps = String::from("component\tfirst\tvertices\tedges\tmax_degree\tbound\tsolver\tobjective\tcooptimal\n");
    for c in &report.components {
        let _ = writeln!(
            comps,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.index,
            c.first,
            c.vertices,
            c.edges,
            c.max_degree,
            c.label_space_bound,
            match c.solver {
                Solver::Dp => "dp",
                Solver::Ilp => "ilp",
            },
            c.objective,
            c.cooptimal.as_ref().map_or_else(|| "unknown".to_string(), |k| k.to_string()),
        );
    }
    std::fs::write(dir.join(COMPONENTS_FILE), comps)?;

    let mut files = vec![CARS_FILE, STATS_FILE, EDGES_FILE, COMPONENTS_FILE];
    let n = outcome.samples.len();
    if n > 0 {
        let mut freq = String::from("node\textremity_a\textremity_b\tcount\tfrequency\n");
        for ((v, a), k) in outcome.frequencies(phylo) {
            let _ = writeln!(freq, "{}\t{}\t{}\t{}\t{:.6}", tree.name(v), a.a(), a.b(), k, k as f64 / n as f64);
        }
        std::fs::write(dir.join(FREQUENCIES_FILE), freq)?;

        let mut samples = String::new();
        for (i, s) in outcome.samples.iter().enumerate() {
            for (v, list) in ancestral_cars(phylo, s)? {
                for car in list {
                    let _ = writeln!(samples, "{i}\t{}\t{car}", tree.name(v));
                }
            }
        }
        std::fs::write(dir.join(SAMPLES_FILE), samples)?;
        files.extend([FREQUENCIES_FILE, SAMPLES_FILE]);
    } else {
        for f in [FREQUENCIES_FILE, SAMPLES_FILE] {
            let p = dir.join(f);
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
    }
    files.push(MANIFEST_FILE);

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        inputs,
        config: &outcome.config,
        report,
        files,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::internal(e.to_string()))?;
    json.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}
