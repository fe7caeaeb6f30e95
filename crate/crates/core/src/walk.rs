//! Exact simulation of the variable-speed walk killed on leaving `B`.
//!
//! At site `y` the walk waits an `Exponential(ω̄(y))` time and then crosses
//! edge `{y, z}` with probability `ω_yz / ω̄(y)`. Each step consumes one
//! uniform for the holding time and then one for the edge, in that order.
//! Crossing a boundary edge ends the path.

use std::io::{self, Write};

use rand::Rng;

use crate::domain::{Neighbor, Point};
use crate::field::ConductanceField;
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq)]
pub struct ExitEvent {
    pub time: f64,
    /// Index of the boundary edge crossed.
    pub edge: usize,
    pub point: Point,
}

/// Jump-chain record of one trajectory up to `min(horizon, exit time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub start: usize,
    /// Times `τ_1 < … < τ_S` of the jumps inside `B`.
    pub jump_times: Vec<f64>,
    /// Sites `X_{τ_0}, …, X_{τ_S}`; one longer than `jump_times`.
    pub sites: Vec<usize>,
    /// Edge crossed at each jump inside `B`.
    pub edges: Vec<usize>,
    pub horizon: f64,
    pub exit: Option<ExitEvent>,
}

impl PathRecord {
    pub fn exited(&self) -> bool {
        self.exit.is_some()
    }

    /// `min(horizon, exit time)`.
    pub fn end_time(&self) -> f64 {
        self.exit.as_ref().map_or(self.horizon, |e| e.time)
    }

    pub fn num_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Site occupied at the end of the record.
    pub fn last_site(&self) -> usize {
        *self.sites.last().expect("path has a start site")
    }

    /// Writes `step,time,x_0,…` rows: one per visited site with its arrival
    /// time, then the exterior point if the walk left the domain.
    pub fn write_csv<W: Write>(&self, field: &ConductanceField, mut out: W) -> io::Result<()> {
        let dom = field.domain();
        let coords: Vec<String> = (0..dom.dim()).map(|k| format!("x{k}")).collect();
        writeln!(out, "step,time,{}", coords.join(","))?;
        let fmt = |p: &[i64]| p.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        for (step, &site) in self.sites.iter().enumerate() {
            let time = if step == 0 { 0.0 } else { self.jump_times[step - 1] };
            writeln!(out, "{step},{time},{}", fmt(dom.site(site)))?;
        }
        if let Some(exit) = &self.exit {
            writeln!(out, "{},{},{}", self.sites.len(), exit.time, fmt(&exit.point))?;
        }
        Ok(())
    }
}

/// Occupation times over `B` up to `min(horizon, exit time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimes {
    pub occupation: Vec<f64>,
    pub horizon: f64,
}

impl LocalTimes {
    pub fn total(&self) -> f64 {
        self.occupation.iter().sum()
    }

    /// `ℓ_t / t`.
    pub fn normalized(&self) -> Vec<f64> {
        self.occupation.iter().map(|l| l / self.horizon).collect()
    }
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

/// Simulates a path from the origin of the field's domain.
pub fn simulate<R: Rng + ?Sized>(f: &ConductanceField, t: f64, rng: &mut R) -> PathRecord {
    simulate_from(f, f.domain().origin_index(), t, rng)
}

/// Simulates a path from site `start` up to time `t` or the first exit.
pub fn simulate_from<R: Rng + ?Sized>(
    f: &ConductanceField,
    start: usize,
    t: f64,
    rng: &mut R,
) -> PathRecord {
    let dom = f.domain();
    let mut rec = PathRecord {
        start,
        jump_times: Vec::new(),
        sites: vec![start],
        edges: Vec::new(),
        horizon: t,
        exit: None,
    };
    if !(t > 0.0) {
        return rec;
    }
    let totals: Vec<f64> = (0..dom.len()).map(|s| f.total_at(s)).collect();
    let mut now = 0.0;
    let mut here = start;
    loop {
        let rate = totals[here];
        let hold = -uniform_open(rng).ln() / rate;
        if now + hold >= t {
            break;
        }
        now += hold;
        let target = rng.random::<f64>() * rate;
        let incident = dom.incident(here);
        let mut acc = 0.0;
        let mut chosen = incident[incident.len() - 1];
        for inc in incident {
            acc += f.weight(inc.edge);
            if target < acc {
                chosen = *inc;
                break;
            }
        }
        match chosen.to {
            Neighbor::Site(next) => {
                rec.jump_times.push(now);
                rec.sites.push(next);
                rec.edges.push(chosen.edge);
                here = next;
            }
            Neighbor::Exit => {
                let e = &dom.edges()[chosen.edge];
                let other = e.other(here).expect("incident edge contains the site");
                rec.exit = Some(ExitEvent {
                    time: now,
                    edge: chosen.edge,
                    point: dom.endpoint_point(other),
                });
                break;
            }
        }
    }
    rec
}

/// Time spent at each site up to `min(horizon, exit time)`.
pub fn local_times(p: &PathRecord, num_sites: usize) -> LocalTimes {
    let mut occupation = vec![0.0; num_sites];
    let end = p.end_time();
    let mut prev = 0.0;
    for (k, &site) in p.sites.iter().enumerate() {
        let leave = p.jump_times.get(k).copied().unwrap_or(end);
        occupation[site] += leave - prev;
        prev = leave;
    }
    LocalTimes { occupation, horizon: p.horizon }
}

/// Fraction of `n` simulated paths from the origin that stay in `B` up to
/// time `t`, with its binomial standard error.
pub fn nonexit_mc<R: Rng + ?Sized>(f: &ConductanceField, t: f64, n: usize, rng: &mut R) -> Estimate {
    if !(t > 0.0) {
        return Estimate { value: 1.0, se: 0.0, n };
    }
    let stayed = (0..n).filter(|_| !simulate(f, t, rng).exited()).count();
    Estimate::binomial(stayed, n)
}
