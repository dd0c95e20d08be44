//! Genetic search for the windows closest to a reference window.
//!
//! A chromosome is a list of `n_c` distinct window indices; its fitness is
//! the mean transform-domain distance of those windows to the reference, so
//! lower is fitter. Each generation keeps the fitter half of the population
//! as parents, breeds one child per adjacent parent pair with two-point
//! crossover, mutates each child adaptively, and folds every gene that beats
//! the distance gate into a bounded archive of the best windows seen.
//!
//! Mutation is driven by the gate: every gene at or beyond `l2_t` is
//! redrawn, and when no gene is that far the single farthest gene is redrawn
//! instead, so a child is never left untouched.
//!
//! Searches for different reference windows are independent. Each one draws
//! from its own ChaCha8 stream seeded with [`stream_seed`], so results do not
//! depend on how runs are scheduled across threads.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ghm::TransformedWindow;
use crate::select::{l2_unchecked, neighbor_order, ClosestSet, Neighbor, WindowBank};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaParams {
    /// Genes per chromosome, and archive capacity.
    pub n_c: usize,
    /// Population size.
    pub n_p: usize,
    /// Generations per round.
    pub g_max: usize,
    /// First position of the crossover band (inclusive).
    pub c_p1: usize,
    /// Last position of the crossover band (inclusive).
    pub c_p2: usize,
    pub l2_t: f64,
    /// Rounds of `g_max` generations before the archive is force-filled.
    pub max_rounds: usize,
    pub seed: u64,
    /// Whether the reference window itself may appear as a gene.
    pub include_self: bool,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            n_c: 16,
            n_p: 10,
            g_max: 100,
            c_p1: 5,
            c_p2: 12,
            l2_t: f64::INFINITY,
            max_rounds: 5,
            seed: 0,
            include_self: true,
        }
    }
}

impl GaParams {
    /// Defaults with gene length `n_c` and a crossover band covering half of
    /// the chromosome, placed as the 16-gene band `5..=12` is.
    pub fn with_gene_length(n_c: usize) -> Self {
        let (c_p1, c_p2) = crossover_band(n_c);
        Self {
            n_c,
            c_p1,
            c_p2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n_c < 2 {
            return bad(format!("GA gene length must be at least 2, got {}", self.n_c));
        }
        if !(self.c_p1 < self.c_p2 && self.c_p2 < self.n_c) {
            return bad(format!(
                "crossover points must satisfy 0 <= c_p1 < c_p2 < n_c, got {} and {} with n_c = {}",
                self.c_p1, self.c_p2, self.n_c
            ));
        }
        if self.n_p < 2 || self.n_p % 2 != 0 {
            return bad(format!("population size must be even and >= 2, got {}", self.n_p));
        }
        if self.g_max == 0 || self.max_rounds == 0 {
            return bad("g_max and max_rounds must be positive".into());
        }
        if !(self.l2_t > 0.0) {
            return bad(format!("L2 threshold must be positive, got {}", self.l2_t));
        }
        Ok(())
    }

    /// Fraction of genes taken from the second parent.
    pub fn crossover_rate(&self) -> f64 {
        (self.c_p2 - self.c_p1 + 1) as f64 / self.n_c as f64
    }
}

/// Crossover band of half the chromosome (at least two genes).
pub fn crossover_band(n_c: usize) -> (usize, usize) {
    let band = (n_c / 2).max(2);
    let start = (5 * n_c / 16).min(n_c.saturating_sub(band));
    (start, start + band - 1)
}

/// Seed of the random stream used for reference window `ref_idx`.
pub fn stream_seed(master: u64, ref_idx: usize) -> u64 {
    // splitmix64 finaliser over the combined value
    let mut z = master ^ (ref_idx as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The set of window indices a gene may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneDomain {
    pub n_w: usize,
    pub excluded: Option<usize>,
}

impl GeneDomain {
    pub fn new(n_w: usize, ref_idx: usize, include_self: bool) -> Self {
        Self {
            n_w,
            excluded: (!include_self).then_some(ref_idx),
        }
    }

    pub fn len(&self) -> usize {
        self.n_w - self.excluded.map_or(0, |_| 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, g: usize) -> bool {
        g < self.n_w && Some(g) != self.excluded
    }

    /// Uniform draw over the domain.
    pub fn draw(&self, rng: &mut impl Rng) -> usize {
        let v = rng.random_range(0..self.len());
        match self.excluded {
            Some(e) if v >= e => v + 1,
            _ => v,
        }
    }

    /// Uniform draw over the domain, redrawn until it is not in `taken`.
    fn draw_excluding(&self, taken: &HashSet<usize>, rng: &mut impl Rng) -> usize {
        loop {
            let v = self.draw(rng);
            if !taken.contains(&v) {
                return v;
            }
        }
    }
}

/// Memoised distances from one reference window to every other window.
pub struct DistanceCache<'a> {
    reference: &'a TransformedWindow,
    bank: &'a WindowBank,
    dists: Vec<Option<f64>>,
    evaluations: usize,
}

impl<'a> DistanceCache<'a> {
    pub fn new(ref_idx: usize, bank: &'a WindowBank) -> Result<Self> {
        Ok(Self {
            reference: bank.get(ref_idx)?,
            bank,
            dists: vec![None; bank.len()],
            evaluations: 0,
        })
    }

    pub fn distance(&mut self, j: usize) -> f64 {
        if let Some(d) = self.dists[j] {
            return d;
        }
        let d = l2_unchecked(self.reference, &self.bank.windows()[j]);
        self.dists[j] = Some(d);
        self.evaluations += 1;
        d
    }

    /// Number of distinct windows evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Every evaluated window.
    pub fn evaluated(&self) -> impl Iterator<Item = Neighbor> + '_ {
        self.dists
            .iter()
            .enumerate()
            .filter_map(|(j, d)| d.map(|d| Neighbor::new(j, d)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub genes: Vec<usize>,
    pub dists: Vec<f64>,
    pub fitness: f64,
}

impl Chromosome {
    pub fn evaluate(genes: Vec<usize>, cache: &mut DistanceCache<'_>) -> Self {
        let dists: Vec<f64> = genes.iter().map(|&g| cache.distance(g)).collect();
        let fitness = dists.iter().sum::<f64>() / dists.len() as f64;
        Self {
            genes,
            dists,
            fitness,
        }
    }

    pub fn has_distinct_genes(&self) -> bool {
        let set: HashSet<_> = self.genes.iter().collect();
        set.len() == self.genes.len()
    }
}

/// Mean distance of the chromosome's windows to the reference.
pub fn fitness(genes: &[usize], cache: &mut DistanceCache<'_>) -> f64 {
    genes.iter().map(|&g| cache.distance(g)).sum::<f64>() / genes.len() as f64
}

fn random_genes(n_c: usize, domain: &GeneDomain, rng: &mut impl Rng) -> Vec<usize> {
    let mut taken = HashSet::with_capacity(n_c);
    let mut genes = Vec::with_capacity(n_c);
    while genes.len() < n_c {
        let g = domain.draw(rng);
        if taken.insert(g) {
            genes.push(g);
        }
    }
    genes
}

/// `n_p` chromosomes of `n_c` distinct uniformly drawn genes.
pub fn init_population(
    domain: &GeneDomain,
    p: &GaParams,
    rng: &mut impl Rng,
    cache: &mut DistanceCache<'_>,
) -> Result<Vec<Chromosome>> {
    if p.n_c > domain.len() {
        return Err(Error::InvalidParams(format!(
            "gene length {} exceeds the {} available windows",
            p.n_c,
            domain.len()
        )));
    }
    Ok((0..p.n_p)
        .map(|_| Chromosome::evaluate(random_genes(p.n_c, domain, rng), cache))
        .collect())
}

/// The fitter half of the population, ascending by fitness, ties by position.
pub fn select_parents(population: &[Chromosome]) -> Vec<Chromosome> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| {
        population[a]
            .fitness
            .total_cmp(&population[b].fitness)
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(population.len() / 2)
        .map(|i| population[i].clone())
        .collect()
}

/// `pa` with positions `c_p1..=c_p2` taken from `pb`, before any repair.
pub fn swap_segment(pa: &[usize], pb: &[usize], c_p1: usize, c_p2: usize) -> Vec<usize> {
    let mut child = pa.to_vec();
    child[c_p1..=c_p2].copy_from_slice(&pb[c_p1..=c_p2]);
    child
}

/// Two-point crossover followed by duplicate repair: later copies of a
/// repeated gene are redrawn until the child is distinct again.
pub fn crossover(
    pa: &Chromosome,
    pb: &Chromosome,
    p: &GaParams,
    domain: &GeneDomain,
    rng: &mut impl Rng,
    cache: &mut DistanceCache<'_>,
) -> Chromosome {
    let mut genes = swap_segment(&pa.genes, &pb.genes, p.c_p1, p.c_p2);
    let mut taken = HashSet::with_capacity(genes.len());
    let mut dup_positions = Vec::new();
    for (k, &g) in genes.iter().enumerate() {
        if !taken.insert(g) {
            dup_positions.push(k);
        }
    }
    for k in dup_positions {
        let g = domain.draw_excluding(&taken, rng);
        taken.insert(g);
        genes[k] = g;
    }
    Chromosome::evaluate(genes, cache)
}

/// Genes to mutate: all genes at or beyond the gate, or, when there are
/// none, the farthest gene (first one on ties).
pub fn mutation_mask(child: &Chromosome, l2_t: f64) -> Vec<bool> {
    let gated: Vec<bool> = child.dists.iter().map(|&d| d >= l2_t).collect();
    if gated.iter().any(|&b| b) {
        return gated;
    }
    let mut far = 0;
    for (k, &d) in child.dists.iter().enumerate() {
        if d > child.dists[far] {
            far = k;
        }
    }
    let mut mask = vec![false; child.dists.len()];
    if !mask.is_empty() {
        mask[far] = true;
    }
    mask
}

/// Redraws every masked gene with a window not already in the chromosome.
/// A chromosome that already spans the whole domain cannot change.
pub fn mutate(
    child: &Chromosome,
    mask: &[bool],
    domain: &GeneDomain,
    rng: &mut impl Rng,
    cache: &mut DistanceCache<'_>,
) -> Chromosome {
    if !mask.iter().any(|&b| b) || child.genes.len() >= domain.len() {
        return child.clone();
    }
    let mut genes = child.genes.clone();
    let mut taken: HashSet<usize> = genes.iter().copied().collect();
    for (k, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let g = domain.draw_excluding(&taken, rng);
        taken.remove(&genes[k]);
        taken.insert(g);
        genes[k] = g;
    }
    Chromosome::evaluate(genes, cache)
}

/// Bounded archive of the closest windows found so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSet {
    pub ref_idx: usize,
    pub capacity: usize,
    pub members: Vec<Neighbor>,
}

impl BestSet {
    pub fn new(ref_idx: usize, capacity: usize) -> Self {
        Self {
            ref_idx,
            capacity,
            members: Vec::with_capacity(capacity),
        }
    }

    pub fn is_full(&self) -> bool {
        self.members.len() >= self.capacity
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.members.iter().any(|n| n.index == idx)
    }
}

/// Merges every population gene closer than `l2_t` into the archive and
/// keeps the `capacity` closest.
pub fn update_best_set(best: &BestSet, population: &[Chromosome], l2_t: f64) -> BestSet {
    let mut merged = best.members.clone();
    let mut seen: HashSet<usize> = merged.iter().map(|n| n.index).collect();
    for chrom in population {
        for (&g, &d) in chrom.genes.iter().zip(&chrom.dists) {
            if d < l2_t && seen.insert(g) {
                merged.push(Neighbor::new(g, d));
            }
        }
    }
    merged.sort_by(neighbor_order);
    merged.truncate(best.capacity);
    BestSet {
        ref_idx: best.ref_idx,
        capacity: best.capacity,
        members: merged,
    }
}

/// State exposed to observers after every generation.
pub struct GenerationReport<'r> {
    pub ref_idx: usize,
    pub round: usize,
    /// Generation counter across rounds, starting at 1.
    pub generation: usize,
    pub population: &'r [Chromosome],
    /// Mutation masks applied to this generation's children.
    pub masks: &'r [Vec<bool>],
    pub best: &'r BestSet,
    pub evaluations: usize,
}

/// One line of the optional per-generation trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub ref_idx: usize,
    pub generation: usize,
    pub best_fitness: f64,
    pub archive_size: usize,
    /// Mean fraction of genes mutated per child.
    pub mutation_rate: f64,
}

impl TraceRecord {
    pub fn from_report(r: &GenerationReport<'_>) -> Self {
        let best_fitness = r
            .population
            .iter()
            .map(|c| c.fitness)
            .fold(f64::INFINITY, f64::min);
        let (mutated, total) = r.masks.iter().fold((0usize, 0usize), |(m, t), mask| {
            (m + mask.iter().filter(|&&b| b).count(), t + mask.len())
        });
        Self {
            ref_idx: r.ref_idx,
            generation: r.generation,
            best_fitness,
            archive_size: r.best.members.len(),
            mutation_rate: if total == 0 { 0.0 } else { mutated as f64 / total as f64 },
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "ref={} generation={} best_fitness={:.6} archive={} mutation_rate={:.4}",
            self.ref_idx, self.generation, self.best_fitness, self.archive_size, self.mutation_rate
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub set: ClosestSet,
    pub rounds: usize,
    pub generations: usize,
    /// Members added by the end-of-search fill.
    pub fallback_members: usize,
    /// Best fitness in the initial population.
    pub initial_best_fitness: f64,
}

/// Genetic closer-window search for `ref_idx`.
pub fn ga_select(ref_idx: usize, bank: &WindowBank, p: &GaParams) -> Result<GaOutcome> {
    ga_select_observed(ref_idx, bank, p, |_| {})
}

/// [`ga_select`] with a callback invoked after every generation.
pub fn ga_select_observed(
    ref_idx: usize,
    bank: &WindowBank,
    p: &GaParams,
    mut observe: impl FnMut(&GenerationReport<'_>),
) -> Result<GaOutcome> {
    p.validate()?;
    let domain = GeneDomain::new(bank.len(), ref_idx, p.include_self);
    let mut cache = DistanceCache::new(ref_idx, bank)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(p.seed, ref_idx));

    let mut population = init_population(&domain, p, &mut rng, &mut cache)?;
    let initial_best_fitness = population
        .iter()
        .map(|c| c.fitness)
        .fold(f64::INFINITY, f64::min);
    let mut best = update_best_set(&BestSet::new(ref_idx, p.n_c), &population, p.l2_t);

    let half = p.n_p / 2;
    let mut generation = 0;
    let mut rounds = 0;
    while rounds < p.max_rounds {
        rounds += 1;
        for _ in 0..p.g_max {
            generation += 1;
            let parents = select_parents(&population);
            let mut masks = Vec::with_capacity(half);
            let mut children = Vec::with_capacity(half);
            for j in 0..half {
                let child = crossover(
                    &parents[j],
                    &parents[(j + 1) % half],
                    p,
                    &domain,
                    &mut rng,
                    &mut cache,
                );
                let mask = mutation_mask(&child, p.l2_t);
                children.push(mutate(&child, &mask, &domain, &mut rng, &mut cache));
                masks.push(mask);
            }
            population = parents;
            population.extend(children);
            best = update_best_set(&best, &population, p.l2_t);
            observe(&GenerationReport {
                ref_idx,
                round: rounds,
                generation,
                population: &population,
                masks: &masks,
                best: &best,
                evaluations: cache.evaluations(),
            });
        }
        if best.is_full() {
            break;
        }
    }

    let mut fallback_members = 0;
    if !best.is_full() {
        let mut pool: Vec<Neighbor> = cache.evaluated().filter(|n| !best.contains(n.index)).collect();
        pool.sort_by(neighbor_order);
        for mut n in pool.into_iter().take(p.n_c - best.members.len()) {
            n.fallback = true;
            best.members.push(n);
            fallback_members += 1;
        }
        best.members.sort_by(neighbor_order);
    }

    Ok(GaOutcome {
        set: ClosestSet {
            ref_idx,
            members: best.members,
            evaluations: cache.evaluations(),
        },
        rounds,
        generations: generation,
        fallback_members,
        initial_best_fitness,
    })
}
