//! Joint densities of colour-split processes.
//!
//! A process over locations × colours `{0..K}` splits into `K+1` unmarked
//! processes. Under the counting-scattering convention (ordered-tuple density
//! `p_n π_n`), their joint density is the marked density times the multinomial
//! coefficient `n! / (n_0! ⋯ n_K!)`.
//!
//! The second half of the module is a brute-force check of that identity on
//! discretized spaces: a [`CellModel`] has a density that is constant on each
//! of `m` equal cells of an interval, so the law of the per-colour cell
//! counts can be computed both by enumerating every ordered marked tuple and
//! by integrating the colour-split joint density cell-wise.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pattern::{ln_fact, Domain, MarkedPattern, Marks, Point};

/// Per-colour patterns `S_0, …, S_K` with the colour field stripped.
#[derive(Clone, Debug, PartialEq)]
pub struct ColouredSplit {
    parts: Vec<MarkedPattern>,
}

impl ColouredSplit {
    pub fn new(parts: Vec<MarkedPattern>) -> Result<Self> {
        if parts.len() < 2 {
            return Err(Error::Structure("a split needs at least two colours".into()));
        }
        Ok(Self {
            parts: parts.into_iter().map(MarkedPattern::without_colours).collect(),
        })
    }

    pub fn parts(&self) -> &[MarkedPattern] {
        &self.parts
    }

    pub fn part(&self, colour: usize) -> &MarkedPattern {
        &self.parts[colour]
    }

    pub fn n_colours(&self) -> usize {
        self.parts.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.parts.iter().map(MarkedPattern::len).collect()
    }

    pub fn total(&self) -> usize {
        self.parts.iter().map(MarkedPattern::len).sum()
    }
}

/// Splits a coloured pattern into `n_colours` parts, keeping point order
/// within each colour.
pub fn split_by_colour(base: &MarkedPattern, n_colours: usize) -> Result<ColouredSplit> {
    let colours = base
        .colours()
        .ok_or_else(|| Error::Structure("pattern has no colour labels".into()))?;
    if let Some(&c) = colours.iter().find(|&&c| c as usize >= n_colours) {
        return Err(Error::Structure(format!("colour {c} outside 0..{n_colours}")));
    }
    let parts = (0..n_colours)
        .map(|k| {
            let idx: Vec<usize> = (0..base.len()).filter(|&i| colours[i] as usize == k).collect();
            select(base, &idx)
        })
        .collect();
    ColouredSplit::new(parts)
}

fn select(base: &MarkedPattern, idx: &[usize]) -> MarkedPattern {
    let locations = idx.iter().map(|&i| base.locations()[i]).collect();
    let times = base.times().map(|t| idx.iter().map(|&i| t[i]).collect());
    let marks = base.marks().map(|m| {
        let values = idx.iter().flat_map(|&i| m.row(i).iter().copied()).collect();
        Marks::new(m.dim(), values).expect("rows of a valid mark matrix")
    });
    MarkedPattern::from_parts(locations, times, marks, None)
}

/// Reassembles the coloured pattern, colour 0 first.
pub fn merge(split: &ColouredSplit) -> Result<MarkedPattern> {
    let nonempty: Vec<&MarkedPattern> = split.parts.iter().filter(|p| !p.is_empty()).collect();
    let has_times = nonempty.first().is_some_and(|p| p.times().is_some());
    let mark_dim = nonempty.first().and_then(|p| p.mark_dim());
    if nonempty
        .iter()
        .any(|p| p.times().is_some() != has_times || p.mark_dim() != mark_dim)
    {
        return Err(Error::Structure("colour parts carry different fields".into()));
    }
    let mut locations: Vec<Point> = Vec::with_capacity(split.total());
    let mut times = Vec::new();
    let mut marks = Vec::new();
    let mut colours = Vec::new();
    for (k, part) in split.parts.iter().enumerate() {
        locations.extend_from_slice(part.locations());
        if let Some(t) = part.times() {
            times.extend_from_slice(t);
        }
        if let Some(m) = part.marks() {
            marks.extend_from_slice(m.values());
        }
        colours.extend(std::iter::repeat_n(k as u32, part.len()));
    }
    // parts may come from different constructions, so re-check distinctness
    let mut seen = std::collections::HashSet::with_capacity(locations.len());
    for p in &locations {
        if !seen.insert([p[0].to_bits(), p[1].to_bits()]) {
            return Err(Error::DuplicatePoint(*p));
        }
    }
    let marks = match mark_dim {
        Some(d) => Some(Marks::new(d, marks)?),
        None => None,
    };
    Ok(MarkedPattern::from_parts(
        locations,
        has_times.then_some(times),
        marks,
        Some(colours),
    ))
}

/// `log n! − Σ log n_k!`.
pub fn log_multinomial(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    ln_fact(n) - counts.iter().map(|&c| ln_fact(c)).sum::<f64>()
}

/// Log joint density of the colour parts given the log density of the
/// coloured (marked) process.
pub fn log_joint_density_from_marked<F>(split: &ColouredSplit, log_marked_density: F) -> Result<f64>
where
    F: Fn(&MarkedPattern) -> f64,
{
    let merged = merge(split)?;
    Ok(log_multinomial(&split.counts()) + log_marked_density(&merged))
}

/// A coloured point process on `m` equal cells of `[0, m·width)` whose
/// density is constant within cells.
pub trait CellModel {
    fn name(&self) -> String;
    fn n_cells(&self) -> usize;
    /// Number of colours `K + 1`.
    fn n_colours(&self) -> usize;
    fn n_max(&self) -> usize;
    fn width(&self) -> f64;
    /// `P(N = n)`, zero above `n_max`.
    fn count_pmf(&self, n: usize) -> f64;
    /// `log π_n` of an ordered tuple: density against Lebesgue measure on
    /// locations and counting measure on colours.
    fn log_scatter(&self, cells: &[usize], colours: &[u32]) -> f64;

    fn domain(&self) -> Domain {
        Domain::interval(0.0, self.n_cells() as f64 * self.width()).expect("positive width")
    }

    fn cell_of(&self, p: &Point) -> usize {
        ((p[0] / self.width()) as usize).min(self.n_cells() - 1)
    }

    /// Log density of a coloured pattern under the counting-scattering
    /// convention.
    fn log_marked_density(&self, pattern: &MarkedPattern) -> f64 {
        let n = pattern.len();
        let pn = self.count_pmf(n);
        if pn <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let cells: Vec<usize> = pattern.locations().iter().map(|p| self.cell_of(p)).collect();
        let colours = pattern.colours().expect("coloured pattern");
        pn.ln() + self.log_scatter(&cells, colours)
    }
}

/// Per-colour cell counts, colour-major: entry `k·m + c` counts colour-`k`
/// points in cell `c`.
pub type CountKey = Vec<u32>;

pub const MAX_ENUMERATION: usize = 10_000_000;

fn enumeration_size(m: usize, colours: usize, n_max: usize) -> Option<usize> {
    let base = m.checked_mul(colours)?;
    let mut term = 1usize;
    let mut total = 1usize;
    for _ in 0..n_max {
        term = term.checked_mul(base)?;
        total = total.checked_add(term)?;
    }
    Some(total)
}

/// Exact law of the per-colour cell counts by summing the ordered-tuple
/// probability `p_n π_n · width^n` over every assignment of cells and colours.
pub fn enumerate_joint_oracle(model: &dyn CellModel) -> Result<BTreeMap<CountKey, f64>> {
    let (m, kc, n_max) = (model.n_cells(), model.n_colours(), model.n_max());
    match enumeration_size(m, kc, n_max) {
        Some(t) if t <= MAX_ENUMERATION => {}
        _ => {
            return Err(Error::TooLarge(format!(
                "{m} cells, {kc} colours, up to {n_max} points exceeds {MAX_ENUMERATION} terms"
            )))
        }
    }
    let mut pmf = BTreeMap::new();
    for n in 0..=n_max {
        let pn = model.count_pmf(n);
        if pn <= 0.0 {
            continue;
        }
        let scale = pn * model.width().powi(n as i32);
        let mut cells = vec![0usize; n];
        let mut colours = vec![0u32; n];
        loop {
            let p = scale * model.log_scatter(&cells, &colours).exp();
            let mut key = vec![0u32; kc * m];
            for (c, k) in cells.iter().zip(&colours) {
                key[*k as usize * m + c] += 1;
            }
            *pmf.entry(key).or_insert(0.0) += p;
            if !advance(&mut cells, &mut colours, m, kc as u32) {
                break;
            }
        }
    }
    Ok(pmf)
}

/// Odometer over `(cells, colours)`; false once it wraps around.
fn advance(cells: &mut [usize], colours: &mut [u32], m: usize, kc: u32) -> bool {
    for i in 0..cells.len() {
        colours[i] += 1;
        if colours[i] < kc {
            return true;
        }
        colours[i] = 0;
        cells[i] += 1;
        if cells[i] < m {
            return true;
        }
        cells[i] = 0;
    }
    false
}

/// A split with the given cell counts. Points sharing a cell get distinct
/// positions inside it; the density cannot tell them apart.
pub fn representative_split(model: &dyn CellModel, key: &[u32]) -> Result<ColouredSplit> {
    let m = model.n_cells();
    let slots = (model.n_max() + 2) as f64;
    let mut used = vec![0usize; m];
    let parts = key
        .chunks(m)
        .map(|row| {
            let mut locs = Vec::new();
            for (c, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    used[c] += 1;
                    locs.push([model.width() * (c as f64 + used[c] as f64 / slots), 0.0]);
                }
            }
            MarkedPattern::new(&model.domain(), locs, None, None, None)
        })
        .collect::<Result<Vec<_>>>()?;
    ColouredSplit::new(parts)
}

fn count_keys(m: usize, kc: usize, n_max: usize) -> Vec<CountKey> {
    fn rec(slot: usize, left: usize, cur: &mut CountKey, out: &mut Vec<CountKey>) {
        if slot == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[slot] = v as u32;
            rec(slot + 1, left - v, cur, out);
        }
        cur[slot] = 0;
    }
    let mut out = Vec::new();
    rec(0, n_max, &mut vec![0; m * kc], &mut out);
    out
}

/// Law of the per-colour cell counts from the colour-split joint density:
/// for each count matrix, joint density × `width^n` × the number of ordered
/// per-colour cell sequences with those counts.
pub fn joint_pmf_from_theorem(model: &dyn CellModel) -> Result<BTreeMap<CountKey, f64>> {
    let m = model.n_cells();
    let mut pmf = BTreeMap::new();
    for key in count_keys(m, model.n_colours(), model.n_max()) {
        let split = representative_split(model, &key)?;
        let log_joint = log_joint_density_from_marked(&split, |x| model.log_marked_density(x))?;
        let n = split.total();
        let arrangements: f64 = key
            .chunks(m)
            .map(|row| {
                let counts: Vec<usize> = row.iter().map(|&v| v as usize).collect();
                log_multinomial(&counts)
            })
            .sum();
        let p = (log_joint + arrangements).exp() * model.width().powi(n as i32);
        if p > 0.0 {
            pmf.insert(key, p);
        }
    }
    Ok(pmf)
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelCheck {
    pub model: String,
    pub configurations: usize,
    pub max_abs_error: f64,
    pub total_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ColouringReport {
    pub checks: Vec<ModelCheck>,
    pub max_abs_error: f64,
    pub passed: bool,
}

pub fn max_abs_difference(a: &BTreeMap<CountKey, f64>, b: &BTreeMap<CountKey, f64>) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}

pub fn check_model(model: &dyn CellModel) -> Result<ModelCheck> {
    let oracle = enumerate_joint_oracle(model)?;
    let theorem = joint_pmf_from_theorem(model)?;
    Ok(ModelCheck {
        model: model.name(),
        configurations: oracle.len(),
        max_abs_error: max_abs_difference(&oracle, &theorem),
        total_mass: theorem.values().sum(),
    })
}

/// Runs every model in [`standard_models`] against the enumeration oracle.
pub fn verify_colouring(tolerance: f64) -> Result<ColouringReport> {
    let checks = standard_models()
        .iter()
        .map(|m| check_model(m.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let max_abs_error = checks.iter().map(|c| c.max_abs_error).fold(0.0, f64::max);
    let passed = checks
        .iter()
        .all(|c| c.max_abs_error < tolerance && (c.total_mass - 1.0).abs() < tolerance);
    Ok(ColouringReport {
        checks,
        max_abs_error,
        passed,
    })
}

/// Poisson counts truncated at `n_max`, locations scattered proportionally to
/// a per-cell intensity, each point coloured independently with
/// cell-dependent probabilities.
#[derive(Clone, Debug)]
pub struct IndependentColouring {
    pub width: f64,
    pub intensity: Vec<f64>,
    pub colour_probs: Vec<Vec<f64>>,
    pub n_max: usize,
}

impl IndependentColouring {
    fn total_intensity(&self) -> f64 {
        self.intensity.iter().sum::<f64>() * self.width
    }

    fn truncation_mass(&self) -> f64 {
        let mean = self.total_intensity();
        (0..=self.n_max).map(|n| poisson_pmf(n, mean)).sum()
    }

    /// Closed form: cell counts per colour are independent Poisson with means
    /// `intensity[c] · width · colour_probs[c][k]`, conditioned on the total
    /// not exceeding `n_max`.
    pub fn closed_form(&self, key: &[u32]) -> f64 {
        let m = self.intensity.len();
        let prod: f64 = key
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (k, c) = (i / m, i % m);
                poisson_pmf(v as usize, self.intensity[c] * self.width * self.colour_probs[c][k])
            })
            .product();
        prod / self.truncation_mass()
    }
}

fn poisson_pmf(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - ln_fact(n)).exp()
}

impl CellModel for IndependentColouring {
    fn name(&self) -> String {
        format!(
            "independent(m={}, K={}, n_max={})",
            self.intensity.len(),
            self.n_colours() - 1,
            self.n_max
        )
    }

    fn n_cells(&self) -> usize {
        self.intensity.len()
    }

    fn n_colours(&self) -> usize {
        self.colour_probs[0].len()
    }

    fn n_max(&self) -> usize {
        self.n_max
    }

    fn width(&self) -> f64 {
        self.width
    }

    fn count_pmf(&self, n: usize) -> f64 {
        if n > self.n_max {
            return 0.0;
        }
        poisson_pmf(n, self.total_intensity()) / self.truncation_mass()
    }

    fn log_scatter(&self, cells: &[usize], colours: &[u32]) -> f64 {
        let total = self.total_intensity();
        cells
            .iter()
            .zip(colours)
            .map(|(&c, &k)| (self.intensity[c] / total * self.colour_probs[c][k as usize]).ln())
            .sum()
    }
}

/// Non-Poisson counts, repulsive scattering and Potts-style colour
/// interactions: the colour of each point depends on where the others are.
#[derive(Clone, Debug)]
pub struct DependentColouring {
    pub width: f64,
    pub count_probs: Vec<f64>,
    pub cell_weight: Vec<f64>,
    /// Penalty per pair of points sharing a cell.
    pub repulsion: f64,
    /// Reward per pair of same-coloured points in the same or adjacent cells.
    pub coupling: f64,
    /// Per-cell, per-colour log preference.
    pub field: Vec<Vec<f64>>,
}

impl DependentColouring {
    fn location_energy(&self, cells: &[usize]) -> f64 {
        let mut e: f64 = cells.iter().map(|&c| self.cell_weight[c].ln()).sum();
        for i in 0..cells.len() {
            for j in 0..i {
                if cells[i] == cells[j] {
                    e -= self.repulsion;
                }
            }
        }
        e
    }

    fn colour_energy(&self, cells: &[usize], colours: &[u32]) -> f64 {
        let mut e: f64 = cells
            .iter()
            .zip(colours)
            .map(|(&c, &k)| self.field[c][k as usize])
            .sum();
        for i in 0..cells.len() {
            for j in 0..i {
                if colours[i] == colours[j] && cells[i].abs_diff(cells[j]) <= 1 {
                    e += self.coupling;
                }
            }
        }
        e
    }

    /// `log ∫ exp(location energy)` over ordered `n`-tuples.
    fn log_location_normalizer(&self, n: usize) -> f64 {
        let m = self.cell_weight.len();
        let mut cells = vec![0usize; n];
        let mut z = 0.0;
        loop {
            z += self.location_energy(&cells).exp();
            if !odometer(&mut cells, m) {
                break;
            }
        }
        z.ln() + n as f64 * self.width.ln()
    }

    fn log_colour_normalizer(&self, cells: &[usize]) -> f64 {
        let kc = self.field[0].len();
        let mut colours = vec![0usize; cells.len()];
        let mut z = 0.0;
        loop {
            let labels: Vec<u32> = colours.iter().map(|&k| k as u32).collect();
            z += self.colour_energy(cells, &labels).exp();
            if !odometer(&mut colours, kc) {
                break;
            }
        }
        z.ln()
    }
}

fn odometer(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

impl CellModel for DependentColouring {
    fn name(&self) -> String {
        format!(
            "dependent(m={}, K={}, n_max={})",
            self.cell_weight.len(),
            self.n_colours() - 1,
            self.n_max()
        )
    }

    fn n_cells(&self) -> usize {
        self.cell_weight.len()
    }

    fn n_colours(&self) -> usize {
        self.field[0].len()
    }

    fn n_max(&self) -> usize {
        self.count_probs.len() - 1
    }

    fn width(&self) -> f64 {
        self.width
    }

    fn count_pmf(&self, n: usize) -> f64 {
        let total: f64 = self.count_probs.iter().sum();
        self.count_probs.get(n).map_or(0.0, |p| p / total)
    }

    fn log_scatter(&self, cells: &[usize], colours: &[u32]) -> f64 {
        self.location_energy(cells) - self.log_location_normalizer(cells.len())
            + self.colour_energy(cells, colours)
            - self.log_colour_normalizer(cells)
    }
}

/// The enumeration suite: small models covering thinning (`K = 1`), three
/// colours, truncated Poisson and arbitrary counts, independent and
/// interacting colourings.
pub fn standard_models() -> Vec<Box<dyn CellModel>> {
    vec![
        Box::new(IndependentColouring {
            width: 1.0 / 3.0,
            intensity: vec![2.0, 1.0, 3.0],
            colour_probs: vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.9, 0.1]],
            n_max: 4,
        }),
        Box::new(IndependentColouring {
            width: 0.25,
            intensity: vec![1.0, 4.0, 2.0, 0.5],
            colour_probs: vec![
                vec![0.2, 0.3, 0.5],
                vec![0.6, 0.2, 0.2],
                vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                vec![0.1, 0.1, 0.8],
            ],
            n_max: 3,
        }),
        Box::new(IndependentColouring {
            width: 0.5,
            intensity: vec![1.0, 1.0],
            colour_probs: vec![vec![0.4, 0.6], vec![0.4, 0.6]],
            n_max: 0,
        }),
        Box::new(DependentColouring {
            width: 0.5,
            count_probs: vec![0.1, 0.2, 0.3, 0.25, 0.15],
            cell_weight: vec![1.0, 2.0, 1.5],
            repulsion: 0.7,
            coupling: 0.9,
            field: vec![vec![0.0, 0.4], vec![0.3, -0.2], vec![-0.5, 0.1]],
        }),
        Box::new(DependentColouring {
            width: 0.25,
            count_probs: vec![0.05, 0.3, 0.4, 0.25],
            cell_weight: vec![1.0, 0.5, 2.0, 1.0],
            repulsion: -0.4,
            coupling: 1.2,
            field: vec![
                vec![0.0, 0.2, -0.3],
                vec![0.1, 0.0, 0.5],
                vec![-0.2, 0.3, 0.0],
                vec![0.4, -0.1, 0.2],
            ],
        }),
        Box::new(DependentColouring {
            width: 1.0,
            count_probs: vec![0.0, 0.0, 0.5, 0.0, 0.5],
            cell_weight: vec![1.0, 3.0],
            repulsion: 0.0,
            coupling: -1.5,
            field: vec![vec![0.0, 0.0], vec![0.0, 1.0]],
        }),
    ]
}
