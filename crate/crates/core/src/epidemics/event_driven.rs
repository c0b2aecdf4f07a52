use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use super::{validate_run, ClockOracle, EpidemicOutcome, Status, StopReason, StopRule};
use crate::env::{Environment, Vertex};
use crate::error::Result;

const SUSCEPTIBLE: u8 = 0;
const INFECTIVE: u8 = 1;
const REMOVED: u8 = 2;

const REMOVAL: u8 = 0;
const TRANSMISSION: u8 = 1;

/// Min-heap entry. Ties in time go to removals first, then to the lower
/// vertex id; ids are assigned in discovery order, which is itself a
/// deterministic function of the clocks.
#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: u8,
    target: u32,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.target.cmp(&self.target))
    }
}

/// Result of a traced event-driven run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub outcome: EpidemicOutcome,
    /// Ever-infected vertices in infection order (the origin first).
    pub ever_infected: Vec<Vertex>,
    /// Number of infectives at each requested grid time. Grid points after a
    /// censoring stop carry the count at the stop.
    pub infective_on_grid: Vec<usize>,
}

struct Engine<'a> {
    env: &'a Environment,
    clocks: &'a ClockOracle,
    lambda: f64,
    ids: FxHashMap<Vertex, u32>,
    verts: Vec<Vertex>,
    state: Vec<u8>,
    heap: BinaryHeap<Event>,
    ever: Vec<u32>,
    infective: usize,
    neighbors: Vec<Vertex>,
}

impl<'a> Engine<'a> {
    fn intern(&mut self, v: Vertex) -> u32 {
        if let Some(&id) = self.ids.get(&v) {
            return id;
        }
        let id = self.verts.len() as u32;
        self.ids.insert(v.clone(), id);
        self.verts.push(v);
        self.state.push(SUSCEPTIBLE);
        id
    }

    fn infect(&mut self, id: u32, now: f64) {
        self.state[id as usize] = INFECTIVE;
        self.infective += 1;
        self.ever.push(id);
        let x = self.verts[id as usize].clone();
        let sender = self.clocks.sender(&x);
        self.heap.push(Event {
            time: now + sender.removal,
            kind: REMOVAL,
            target: id,
        });
        let mut neighbors = std::mem::take(&mut self.neighbors);
        neighbors.clear();
        self.env.open_neighbors_into(&x, &mut neighbors);
        for y in neighbors.drain(..) {
            if let Some(&yid) = self.ids.get(&y) {
                if self.state[yid as usize] != SUSCEPTIBLE {
                    continue;
                }
            }
            let delay = sender.e_unit(&y) / self.lambda;
            if delay < sender.removal {
                let yid = self.intern(y);
                self.heap.push(Event {
                    time: now + delay,
                    kind: TRANSMISSION,
                    target: yid,
                });
            }
        }
        self.neighbors = neighbors;
    }
}

/// Event-driven simulation from a single infective at the origin.
///
/// An infective `x` infected at time `s` is removed at `s + T(x)` and, for
/// each open neighbour `y`, fires a transmission at `s + U(x, y)` provided
/// `U(x, y) < T(x)`; the transmission takes effect only if `y` is still
/// susceptible.
pub fn run_event_driven(
    env: &Environment,
    clocks: &ClockOracle,
    lambda: f64,
    stop: &StopRule,
) -> Result<EpidemicOutcome> {
    run_event_driven_traced(env, clocks, lambda, stop, &[]).map(|t| t.outcome)
}

/// As [`run_event_driven`], also returning the ever-infected set and the
/// infective count sampled at the (ascending) times in `grid`.
pub fn run_event_driven_traced(
    env: &Environment,
    clocks: &ClockOracle,
    lambda: f64,
    stop: &StopRule,
    grid: &[f64],
) -> Result<Trace> {
    validate_run(env, lambda, stop)?;
    let n_limit = stop.n_limit();
    let mut engine = Engine {
        env,
        clocks,
        lambda,
        ids: FxHashMap::default(),
        verts: Vec::new(),
        state: Vec::new(),
        heap: BinaryHeap::new(),
        ever: Vec::new(),
        infective: 0,
        neighbors: Vec::new(),
    };
    let mut on_grid = Vec::with_capacity(grid.len());
    let origin = engine.intern(env.origin());
    engine.infect(origin, 0.0);

    let mut events = 0u64;
    let mut stopped: Option<(Status, StopReason, Option<f64>)> = None;
    if engine.ever.len() >= n_limit {
        stopped = Some((Status::Censored, StopReason::NMax, None));
    }
    while stopped.is_none() {
        let Some(ev) = engine.heap.pop() else {
            // Unreachable: the last removal empties the infective set first.
            stopped = Some((Status::Extinct, StopReason::Extinction, Some(0.0)));
            break;
        };
        if ev.time > stop.t_max {
            fill_grid(&mut on_grid, grid, stop.t_max, engine.infective, true);
            stopped = Some((Status::Censored, StopReason::TMax, None));
            break;
        }
        fill_grid(&mut on_grid, grid, ev.time, engine.infective, false);
        events += 1;
        match ev.kind {
            REMOVAL => {
                engine.state[ev.target as usize] = REMOVED;
                engine.infective -= 1;
                if engine.infective == 0 {
                    stopped = Some((Status::Extinct, StopReason::Extinction, Some(ev.time)));
                }
            }
            _ => {
                if engine.state[ev.target as usize] == SUSCEPTIBLE {
                    engine.infect(ev.target, ev.time);
                    if engine.ever.len() >= n_limit {
                        stopped = Some((Status::Censored, StopReason::NMax, None));
                    }
                }
            }
        }
    }
    let (status, stop_reason, extinction_time) = stopped.expect("loop exits with a stop");
    let tail = if status == Status::Extinct {
        0
    } else {
        engine.infective
    };
    on_grid.resize(grid.len(), tail);

    let ever_infected = engine
        .ever
        .iter()
        .map(|&id| engine.verts[id as usize].clone())
        .collect();
    Ok(Trace {
        outcome: EpidemicOutcome {
            status,
            n_ever_infected: engine.ever.len(),
            extinction_time,
            events_processed: events,
            stop_reason,
        },
        ever_infected,
        infective_on_grid: on_grid,
    })
}

/// Records `count` for every grid point before `time` (or up to and including
/// it when `inclusive`).
fn fill_grid(out: &mut Vec<usize>, grid: &[f64], time: f64, count: usize, inclusive: bool) {
    while out.len() < grid.len() {
        let g = grid[out.len()];
        if g < time || (inclusive && g <= time) {
            out.push(count);
        } else {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_finite_env, make_lattice_env};
    use crate::epidemics::transmission_reachability;

    #[test]
    fn n_max_one_stops_at_origin() {
        let env = make_lattice_env(3, 1.0, 1).unwrap();
        for s in 0..20 {
            let out =
                run_event_driven(&env, &ClockOracle::new(s), 2.0, &StopRule::n_max(1)).unwrap();
            assert_eq!(out.n_ever_infected, 1);
            assert!(out.status == Status::Censored || out.status == Status::Extinct);
        }
    }

    #[test]
    fn tiny_lambda_never_transmits() {
        let env = make_lattice_env(2, 1.0, 3).unwrap();
        for s in 0..1000 {
            let out =
                run_event_driven(&env, &ClockOracle::new(s), 1e-9, &StopRule::n_max(100)).unwrap();
            assert_eq!(out.n_ever_infected, 1);
            assert_eq!(out.status, Status::Extinct);
            assert_eq!(out.stop_reason, StopReason::Extinction);
            let t = out.extinction_time.unwrap();
            assert!(t.is_finite() && t > 0.0);
        }
    }

    #[test]
    fn one_dimension_always_dies_out() {
        let env = make_lattice_env(1, 1.0, 0).unwrap();
        for s in 0..1000 {
            let out = run_event_driven(&env, &ClockOracle::new(s), 10.0, &StopRule::n_max(100_000))
                .unwrap();
            assert_eq!(out.status, Status::Extinct, "seed {s}");
        }
    }

    #[test]
    fn huge_lambda_infects_whole_triangle() {
        let env = make_finite_env(&[(0, 1), (1, 2), (2, 0)]).unwrap();
        let full = (0..10_000)
            .filter(|&s| {
                run_event_driven(&env, &ClockOracle::new(s), 1e6, &StopRule::unbounded())
                    .unwrap()
                    .n_ever_infected
                    == 3
            })
            .count();
        assert!(full as f64 / 10_000.0 >= 0.999, "{full}");
    }

    #[test]
    fn t_max_censors() {
        let env = make_lattice_env(4, 1.0, 2).unwrap();
        let mut censored = 0;
        for s in 0..200 {
            let out =
                run_event_driven(&env, &ClockOracle::new(s), 2.0, &StopRule::t_max(0.5)).unwrap();
            if out.status == Status::Censored {
                assert_eq!(out.stop_reason, StopReason::TMax);
                assert!(out.extinction_time.is_none());
                censored += 1;
            } else {
                assert!(out.extinction_time.unwrap() <= 0.5);
            }
        }
        assert!(censored > 0);
    }

    #[test]
    fn ever_infected_matches_reachability() {
        let env = make_lattice_env(2, 0.7, 9).unwrap();
        for s in 0..300 {
            let clocks = ClockOracle::new(s);
            let trace =
                run_event_driven_traced(&env, &clocks, 0.3, &StopRule::n_max(10_000), &[]).unwrap();
            if trace.outcome.status == Status::Extinct {
                let reach = transmission_reachability(&env, &clocks, 0.3, 10_000).unwrap();
                assert!(!reach.truncated);
                let mut a = trace.ever_infected.clone();
                let mut b = reach.vertices.clone();
                a.sort();
                b.sort();
                assert_eq!(a, b, "seed {s}");
            }
        }
    }

    #[test]
    fn grid_counts_start_at_one_and_end_at_zero_when_extinct() {
        let env = make_lattice_env(3, 1.0, 4).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        for s in 0..50 {
            let trace = run_event_driven_traced(
                &env,
                &ClockOracle::new(s),
                0.1,
                &StopRule::t_max(10.0),
                &grid,
            )
            .unwrap();
            assert_eq!(trace.infective_on_grid.len(), grid.len());
            assert_eq!(trace.infective_on_grid[0], 1);
            if trace.outcome.status == Status::Extinct {
                assert_eq!(*trace.infective_on_grid.last().unwrap(), 0);
            }
        }
    }
}
