//! Exact event-driven simulation of the absorbed chain and of the
//! Fleming-Viot particle system.
//!
//! Random streams: every run takes a [`SimRng`] (ChaCha8). Independent runs
//! derive theirs from one seed with [`stream_rng`], which selects a ChaCha
//! stream, so replicas never share randomness and results do not depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{tv_distance, EmpiricalMeasure};
use crate::model::BirthDeathModel;

pub type SimRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    Birth,
    Death,
    Absorption,
    /// The particle hit 0 and jumped onto particle `source`.
    Rebirth { source: usize },
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Birth => "birth",
            EventKind::Death => "death",
            EventKind::Absorption => "absorption",
            EventKind::Rebirth { .. } => "rebirth",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    pub particle: usize,
    pub kind: EventKind,
    pub from: u64,
    pub to: u64,
}

/// Write `time,particle,kind,from,to` rows.
pub fn write_events_csv<W: std::io::Write>(events: &[PathEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "particle", "kind", "from", "to"])?;
    for e in events {
        w.write_record([
            format!("{:e}", e.time),
            e.particle.to_string(),
            e.kind.label().to_string(),
            e.from.to_string(),
            e.to.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdPath {
    pub events: Vec<PathEvent>,
    pub absorbed: bool,
    pub absorption_time: Option<f64>,
    /// State at `t_max`, or 0 once absorbed.
    pub final_state: u64,
}

/// Simulate a single absorbed chain from `x0` until absorption or `t_max`.
pub fn simulate_bd<R: Rng>(model: &BirthDeathModel, x0: u64, t_max: f64, rng: &mut R) -> Result<BdPath> {
    if x0 == 0 {
        return Err(Error::InvalidInput("start state must be at least 1".into()));
    }
    let mut state = x0;
    let mut t = 0.0;
    let mut events = Vec::new();
    loop {
        let (b, d) = model.rates(state)?;
        let q = b + d;
        let hold: f64 = Exp1.sample(rng);
        let next = t + hold / q;
        if next > t_max {
            return Ok(BdPath {
                events,
                absorbed: false,
                absorption_time: None,
                final_state: state,
            });
        }
        t = next;
        let up = rng.random::<f64>() * q < b;
        let to = if up { state + 1 } else { state - 1 };
        let kind = match (up, to) {
            (true, _) => EventKind::Birth,
            (false, 0) => EventKind::Absorption,
            (false, _) => EventKind::Death,
        };
        events.push(PathEvent {
            time: t,
            particle: 0,
            kind,
            from: state,
            to,
        });
        state = to;
        if state == 0 {
            return Ok(BdPath {
                events,
                absorbed: true,
                absorption_time: Some(t),
                final_state: 0,
            });
        }
    }
}

/// Cached `(b_s, b_s + d_s)` by state.
#[derive(Clone, Debug)]
struct RateCache {
    rates: Vec<(f64, f64)>,
}

impl RateCache {
    fn new() -> Self {
        Self { rates: vec![(0.0, 0.0)] }
    }

    #[inline]
    fn get(&mut self, model: &BirthDeathModel, s: u64) -> Result<(f64, f64)> {
        let k = s as usize;
        if k >= self.rates.len() {
            for i in self.rates.len()..=k {
                let (b, d) = model.rates(i as u64)?;
                self.rates.push((b, b + d));
            }
        }
        Ok(self.rates[k])
    }
}

/// Exact recomputation of the total rate every this many events.
const REFRESH_EVERY: u32 = 4096;

/// State of an `N`-particle Fleming-Viot system.
///
/// Particles are also bucketed by state, so picking the next particle to
/// move costs a scan over occupied states rather than over particles, and
/// the total jump rate is kept up to date incrementally.
#[derive(Clone, Debug)]
pub struct ParticleSystem<'m> {
    model: &'m BirthDeathModel,
    positions: Vec<u64>,
    time: f64,
    rebirth_count: u64,
    rng: SimRng,
    cache: RateCache,
    buckets: Vec<Vec<u32>>,
    slot: Vec<u32>,
    total_rate: f64,
    max_occupied: usize,
    since_refresh: u32,
}

impl<'m> ParticleSystem<'m> {
    pub fn new(model: &'m BirthDeathModel, positions: Vec<u64>, rng: SimRng) -> Result<Self> {
        model.require_valid()?;
        if positions.len() < 2 {
            return Err(Error::InvalidInput("a particle system needs N >= 2".into()));
        }
        if positions.len() > u32::MAX as usize {
            return Err(Error::InvalidInput("too many particles".into()));
        }
        if positions.contains(&0) {
            return Err(Error::InvalidInput("initial positions must be >= 1".into()));
        }
        let mut sys = Self {
            model,
            positions: Vec::new(),
            time: 0.0,
            rebirth_count: 0,
            rng,
            cache: RateCache::new(),
            buckets: vec![Vec::new()],
            slot: vec![0; positions.len()],
            total_rate: 0.0,
            max_occupied: 0,
            since_refresh: 0,
        };
        for (p, &x) in positions.iter().enumerate() {
            sys.cache.get(model, x)?;
            sys.insert(p, x);
        }
        sys.positions = positions;
        sys.refresh_total();
        Ok(sys)
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rebirth_count(&self) -> u64 {
        self.rebirth_count
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Number of particles at state `s`.
    pub fn count(&self, s: u64) -> usize {
        self.buckets.get(s as usize).map_or(0, Vec::len)
    }

    pub fn rng(&self) -> &SimRng {
        &self.rng
    }

    /// Empirical measure `(1/N) sum_i delta_{X_i}`.
    pub fn measure(&self) -> EmpiricalMeasure {
        let n = self.positions.len() as f64;
        EmpiricalMeasure::new(
            self.buckets
                .iter()
                .enumerate()
                .filter(|(_, b)| !b.is_empty())
                .map(|(s, b)| (s as u64, b.len() as f64 / n)),
        )
        .expect("a particle system always has mass")
    }

    fn insert(&mut self, p: usize, s: u64) {
        let k = s as usize;
        if k >= self.buckets.len() {
            self.buckets.resize_with(k + 1, Vec::new);
        }
        self.slot[p] = self.buckets[k].len() as u32;
        self.buckets[k].push(p as u32);
        self.max_occupied = self.max_occupied.max(k);
    }

    fn remove(&mut self, p: usize, s: u64) {
        let k = s as usize;
        let idx = self.slot[p] as usize;
        let bucket = &mut self.buckets[k];
        let last = bucket.pop().expect("particle missing from its bucket");
        if last as usize != p {
            bucket[idx] = last;
            self.slot[last as usize] = idx as u32;
        }
        while self.max_occupied > 1 && self.buckets[self.max_occupied].is_empty() {
            self.max_occupied -= 1;
        }
    }

    fn refresh_total(&mut self) {
        self.total_rate = (1..=self.max_occupied)
            .map(|s| self.buckets[s].len() as f64 * self.cache.rates[s].1)
            .sum();
        self.since_refresh = 0;
    }

    /// Draw the time to the next event, `Exp(total rate)`.
    pub fn draw_holding(&mut self) -> f64 {
        let e: f64 = Exp1.sample(&mut self.rng);
        e / self.total_rate
    }

    /// Pick the next particle proportionally to its jump rate.
    fn pick(&mut self) -> (usize, u64) {
        let mut u = self.rng.random::<f64>() * self.total_rate;
        let mut last_nonempty = 1;
        for s in 1..=self.max_occupied {
            let n = self.buckets[s].len();
            if n == 0 {
                continue;
            }
            last_nonempty = s;
            let q = self.cache.rates[s].1;
            let w = n as f64 * q;
            if u < w {
                let k = ((u / q) as usize).min(n - 1);
                return (self.buckets[s][k] as usize, s as u64);
            }
            u -= w;
        }
        // Rounding in the running total; fall back to the last state.
        let n = self.buckets[last_nonempty].len();
        let k = self.rng.random_range(0..n);
        (self.buckets[last_nonempty][k] as usize, last_nonempty as u64)
    }

    /// Apply the next jump at time `at`. A particle landing on 0 is moved at
    /// once onto a uniformly chosen other particle.
    pub fn fire(&mut self, at: f64) -> Result<PathEvent> {
        let (p, s) = self.pick();
        let (b, q) = self.cache.rates[s as usize];
        let up = self.rng.random::<f64>() * q < b;
        let (to, kind) = if up {
            (s + 1, EventKind::Birth)
        } else if s > 1 {
            (s - 1, EventKind::Death)
        } else {
            let n = self.positions.len();
            let mut source = self.rng.random_range(0..n - 1);
            if source >= p {
                source += 1;
            }
            self.rebirth_count += 1;
            (self.positions[source], EventKind::Rebirth { source })
        };
        let (_, q_to) = self.cache.get(self.model, to)?;
        self.remove(p, s);
        self.insert(p, to);
        self.positions[p] = to;
        self.time = at;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh_total();
        } else {
            self.total_rate += q_to - q;
        }
        Ok(PathEvent {
            time: at,
            particle: p,
            kind,
            from: s,
            to,
        })
    }

    /// Advance to the next event.
    pub fn step(&mut self) -> Result<PathEvent> {
        let dt = self.draw_holding();
        let at = self.time + dt;
        self.fire(at)
    }
}

/// One step of the particle system; see [`ParticleSystem::step`].
pub fn fv_step(state: &mut ParticleSystem<'_>) -> Result<PathEvent> {
    state.step()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FvConfig {
    pub t_max: f64,
    /// Start of the averaging window; defaults to `t_max / 5`.
    pub t_burn: Option<f64>,
    /// Snapshot times; values past `t_max` are ignored.
    pub observe: Vec<f64>,
    pub record_events: bool,
    /// Largest TV distance between the occupation measures of the two halves
    /// of the averaging window for the run to count as stationary.
    pub stationarity_tol: f64,
}

impl FvConfig {
    pub fn new(t_max: f64) -> Self {
        Self {
            t_max,
            t_burn: None,
            observe: Vec::new(),
            record_events: false,
            stationarity_tol: 0.1,
        }
    }

    pub fn burn_in(&self) -> f64 {
        self.t_burn.unwrap_or(self.t_max / 5.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub measure: EmpiricalMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FvRun {
    pub snapshots: Vec<Snapshot>,
    /// Time average of the empirical measure over `[t_burn, t_max]`.
    pub occupation: EmpiricalMeasure,
    pub first_half: EmpiricalMeasure,
    pub second_half: EmpiricalMeasure,
    pub stationarity_tv: f64,
    pub stationary: bool,
    pub rebirth_count: u64,
    /// Rebirths per unit time over the whole run.
    pub rebirth_rate: f64,
    pub event_count: u64,
    pub events: Vec<PathEvent>,
    pub final_positions: Vec<u64>,
}

/// Write `t,state,weight` rows for a snapshot series.
pub fn write_snapshots_csv<W: std::io::Write>(snapshots: &[Snapshot], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "state", "weight"])?;
    for snap in snapshots {
        for (s, p) in snap.measure.iter() {
            w.write_record([format!("{:e}", snap.time), s.to_string(), format!("{p:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Time-weighted state counts over two adjacent windows `[start, mid)` and
/// `[mid, end)`, accumulated lazily per state.
struct Occupation {
    start: f64,
    mid: f64,
    end: f64,
    counts: Vec<u64>,
    last: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Occupation {
    fn new(start: f64, end: f64, positions: &[u64]) -> Self {
        let mut occ = Self {
            start,
            mid: 0.5 * (start + end),
            end,
            counts: Vec::new(),
            last: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
        };
        for &x in positions {
            occ.grow(x);
            occ.counts[x as usize] += 1;
        }
        occ
    }

    fn grow(&mut self, s: u64) {
        let k = s as usize + 1;
        if k > self.counts.len() {
            self.counts.resize(k, 0);
            self.last.resize(k, 0.0);
            self.first.resize(k, 0.0);
            self.second.resize(k, 0.0);
        }
    }

    #[inline]
    fn flush(&mut self, s: usize, t: f64) {
        let n = self.counts[s] as f64;
        let from = self.last[s];
        self.last[s] = t;
        if n == 0.0 {
            return;
        }
        let a = (from.max(self.start), t.min(self.mid));
        if a.1 > a.0 {
            self.first[s] += n * (a.1 - a.0);
        }
        let b = (from.max(self.mid), t.min(self.end));
        if b.1 > b.0 {
            self.second[s] += n * (b.1 - b.0);
        }
    }

    #[inline]
    fn on_move(&mut self, from: u64, to: u64, t: f64) {
        self.grow(to);
        self.flush(from as usize, t);
        self.counts[from as usize] -= 1;
        self.flush(to as usize, t);
        self.counts[to as usize] += 1;
    }

    fn finish(mut self) -> Result<(EmpiricalMeasure, EmpiricalMeasure, EmpiricalMeasure)> {
        for s in 1..self.counts.len() {
            self.flush(s, self.end);
        }
        let first = EmpiricalMeasure::new(self.first.iter().enumerate().skip(1).map(|(s, &w)| (s as u64, w)))?;
        let second = EmpiricalMeasure::new(self.second.iter().enumerate().skip(1).map(|(s, &w)| (s as u64, w)))?;
        let all = EmpiricalMeasure::new(
            self.first
                .iter()
                .zip(&self.second)
                .enumerate()
                .skip(1)
                .map(|(s, (a, b))| (s as u64, a + b)),
        )?;
        Ok((all, first, second))
    }
}

/// Run the particle system from `initial` up to `config.t_max`.
pub fn fv_run(model: &BirthDeathModel, initial: Vec<u64>, config: &FvConfig, rng: SimRng) -> Result<FvRun> {
    let t_max = config.t_max;
    let t_burn = config.burn_in();
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidInput("t_max must be positive and finite".into()));
    }
    if !(t_burn >= 0.0) || t_burn >= t_max {
        return Err(Error::InvalidInput(format!(
            "t_burn = {t_burn} must lie in [0, t_max = {t_max})"
        )));
    }
    let mut schedule: Vec<f64> = config.observe.iter().copied().filter(|&t| t <= t_max).collect();
    schedule.sort_by(f64::total_cmp);

    let mut sys = ParticleSystem::new(model, initial, rng)?;
    let mut occ = Occupation::new(t_burn, t_max, sys.positions());
    let mut snapshots = Vec::with_capacity(schedule.len());
    let mut next_obs = 0;
    let mut events = Vec::new();
    let mut event_count = 0u64;
    loop {
        let at = sys.time() + sys.draw_holding();
        let horizon = at.min(t_max);
        while next_obs < schedule.len() && schedule[next_obs] <= horizon {
            snapshots.push(Snapshot {
                time: schedule[next_obs],
                measure: sys.measure(),
            });
            next_obs += 1;
        }
        if at > t_max {
            break;
        }
        let ev = sys.fire(at)?;
        occ.on_move(ev.from, ev.to, at);
        event_count += 1;
        if config.record_events {
            events.push(ev);
        }
    }
    let (occupation, first_half, second_half) = occ.finish()?;
    let stationarity_tv = tv_distance(&first_half, &second_half);
    Ok(FvRun {
        snapshots,
        occupation,
        first_half,
        second_half,
        stationarity_tv,
        stationary: stationarity_tv <= config.stationarity_tol,
        rebirth_count: sys.rebirth_count(),
        rebirth_rate: sys.rebirth_count() as f64 / t_max,
        event_count,
        events,
        final_positions: sys.positions().to_vec(),
    })
}
