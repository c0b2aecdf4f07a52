use rand::Rng;
use rustc_hash::FxHashMap;

use super::{validate_run, EpidemicOutcome, Status, StopReason, StopRule};
use crate::env::{Environment, Vertex};
use crate::error::Result;

const SUSCEPTIBLE: u8 = 0;
const INFECTIVE: u8 = 1;
const REMOVED: u8 = 2;

/// Indexed set with O(1) insert, remove and uniform pick.
#[derive(Default)]
struct IndexedSet<T: std::hash::Hash + Eq + Copy> {
    items: Vec<T>,
    pos: FxHashMap<T, usize>,
}

impl<T: std::hash::Hash + Eq + Copy> IndexedSet<T> {
    fn insert(&mut self, t: T) {
        if !self.pos.contains_key(&t) {
            self.pos.insert(t, self.items.len());
            self.items.push(t);
        }
    }

    fn remove(&mut self, t: &T) {
        if let Some(i) = self.pos.remove(t) {
            let last = self.items.pop().expect("non-empty");
            if i < self.items.len() {
                self.items[i] = last;
                self.pos.insert(last, i);
            }
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

struct Chain<'a> {
    env: &'a Environment,
    ids: FxHashMap<Vertex, u32>,
    verts: Vec<Vertex>,
    state: Vec<u8>,
    infectives: IndexedSet<u32>,
    /// Open (infective, susceptible) pairs.
    pairs: IndexedSet<(u32, u32)>,
    scratch: Vec<Vertex>,
}

impl<'a> Chain<'a> {
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

    fn neighbor_ids(&mut self, id: u32) -> Vec<u32> {
        let mut nb = std::mem::take(&mut self.scratch);
        nb.clear();
        let x = self.verts[id as usize].clone();
        self.env.open_neighbors_into(&x, &mut nb);
        let ids = nb.drain(..).map(|y| self.intern(y)).collect();
        self.scratch = nb;
        ids
    }

    fn infect(&mut self, y: u32) {
        self.state[y as usize] = INFECTIVE;
        self.infectives.insert(y);
        for z in self.neighbor_ids(y) {
            match self.state[z as usize] {
                INFECTIVE => self.pairs.remove(&(z, y)),
                SUSCEPTIBLE => self.pairs.insert((y, z)),
                _ => {}
            }
        }
    }

    fn remove(&mut self, x: u32) {
        self.state[x as usize] = REMOVED;
        self.infectives.remove(&x);
        for z in self.neighbor_ids(x) {
            if self.state[z as usize] == SUSCEPTIBLE {
                self.pairs.remove(&(x, z));
            }
        }
    }
}

/// Direct simulation of the jump chain: in state (S, I) the next event occurs
/// after an Exp(|I| + lambda * #{open S-I pairs}) holding time and is a
/// removal of a uniform infective or an infection across a uniform open
/// susceptible-infective pair, in proportion to the two rate totals.
pub fn run_direct_ctmc<R: Rng + ?Sized>(
    env: &Environment,
    lambda: f64,
    stream: &mut R,
    stop: &StopRule,
) -> Result<EpidemicOutcome> {
    validate_run(env, lambda, stop)?;
    let n_limit = stop.n_limit();
    let mut chain = Chain {
        env,
        ids: FxHashMap::default(),
        verts: Vec::new(),
        state: Vec::new(),
        infectives: IndexedSet::default(),
        pairs: IndexedSet::default(),
        scratch: Vec::new(),
    };
    let origin = chain.intern(env.origin());
    chain.infect(origin);
    let mut ever = 1usize;
    let mut now = 0.0f64;
    let mut events = 0u64;

    let censored = |reason, ever, events| EpidemicOutcome {
        status: Status::Censored,
        n_ever_infected: ever,
        extinction_time: None,
        events_processed: events,
        stop_reason: reason,
    };
    if ever >= n_limit {
        return Ok(censored(StopReason::NMax, ever, events));
    }
    loop {
        let n_inf = chain.infectives.len() as f64;
        let infection_rate = lambda * chain.pairs.len() as f64;
        let total = n_inf + infection_rate;
        let u: f64 = 1.0 - stream.random::<f64>();
        now += -u.ln() / total;
        if now > stop.t_max {
            return Ok(censored(StopReason::TMax, ever, events));
        }
        events += 1;
        let pick = stream.random::<f64>() * total;
        if pick < n_inf || chain.pairs.len() == 0 {
            let i = (pick as usize).min(chain.infectives.len() - 1);
            let x = chain.infectives.items[i];
            chain.remove(x);
            if chain.infectives.len() == 0 {
                return Ok(EpidemicOutcome {
                    status: Status::Extinct,
                    n_ever_infected: ever,
                    extinction_time: Some(now),
                    events_processed: events,
                    stop_reason: StopReason::Extinction,
                });
            }
        } else {
            let k = (((pick - n_inf) / lambda) as usize).min(chain.pairs.len() - 1);
            let (_, y) = chain.pairs.items[k];
            chain.infect(y);
            ever += 1;
            if ever >= n_limit {
                return Ok(censored(StopReason::NMax, ever, events));
            }
        }
    }
}
