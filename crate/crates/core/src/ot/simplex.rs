//! Primal network simplex for uncapacitated transportation problems.
//!
//! Spanning-tree bookkeeping follows the thread/successor representation of
//! LEMON's `NetworkSimplex` with block-search pivoting. Artificial arcs to an
//! extra root node occupy arc slots `0..node_num`, so real arcs can be
//! appended between solves (column generation) without invalidating the
//! current basis.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NONE: usize = usize::MAX;
const STATE_LOWER: i8 = 1;
const STATE_TREE: i8 = 0;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

pub(crate) struct NetworkSimplex<T> {
    node_num: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<T>,
    flow: Vec<T>,
    state: Vec<i8>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    pi: Vec<T>,
    dirty_revs: Vec<usize>,

    next_arc: usize,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: T,
    /// Reduced costs above `-tol` count as optimal; potentials carry the
    /// artificial cost, so rounding noise scales with it.
    tol: T,
}

impl<T: Scalar> NetworkSimplex<T> {
    /// `supply[u] > 0` for sources, `< 0` for sinks. `art_cost` must exceed the
    /// cost of any simple path using real arcs (including arcs added later).
    pub fn new(supply: &[T], art_cost: T) -> Self {
        let n = supply.len();
        let root = n;
        let mut s = NetworkSimplex {
            node_num: n,
            source: vec![0; n],
            target: vec![0; n],
            cost: vec![T::zero(); n],
            flow: vec![T::zero(); n],
            state: vec![STATE_TREE; n],
            parent: vec![NONE; n + 1],
            pred: vec![NONE; n + 1],
            thread: vec![0; n + 1],
            rev_thread: vec![0; n + 1],
            succ_num: vec![1; n + 1],
            last_succ: vec![0; n + 1],
            pred_dir: vec![DIR_UP; n + 1],
            pi: vec![T::zero(); n + 1],
            dirty_revs: Vec::new(),
            next_arc: n,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: T::zero(),
            tol: art_cost * T::epsilon() * T::lit(64.0),
        };
        s.parent[root] = NONE;
        s.pred[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = n + 1;
        s.last_succ[root] = root - 1;
        for u in 0..n {
            let e = u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if supply[u] >= T::zero() {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = T::zero();
                s.source[e] = u;
                s.target[e] = root;
                s.flow[e] = supply[u];
                s.cost[e] = T::zero();
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.source[e] = root;
                s.target[e] = u;
                s.flow[e] = -supply[u];
                s.cost[e] = art_cost;
            }
        }
        s
    }

    pub fn add_arc(&mut self, from: usize, to: usize, cost: T) {
        self.source.push(from);
        self.target.push(to);
        self.cost.push(cost);
        self.flow.push(T::zero());
        self.state.push(STATE_LOWER);
    }

    /// Node potentials; reduced cost of `u -> v` is `c + pi[u] - pi[v]`.
    pub fn potential(&self, u: usize) -> T {
        self.pi[u]
    }

    /// Reduced-cost threshold below which an arc would still enter the basis.
    pub fn tolerance(&self) -> T {
        self.tol
    }

    /// Real arcs carrying positive flow as `(from, to, flow)`.
    pub fn positive_flows(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (self.node_num..self.source.len())
            .filter(move |&e| self.flow[e] > T::zero())
            .map(move |e| (self.source[e], self.target[e], self.flow[e]))
    }

    /// Total flow still routed through artificial arcs.
    pub fn artificial_flow(&self) -> T {
        self.flow[..self.node_num].iter().copied().fold(T::zero(), |a, b| a + b)
    }

    /// Runs pivots until no real arc has negative reduced cost.
    pub fn run(&mut self, max_pivots: usize) -> Result<()> {
        let arc_total = self.source.len();
        let search = arc_total - self.node_num;
        if search == 0 {
            return Ok(());
        }
        let block = ((search as f64).sqrt() as usize).max(10).min(search);
        if self.next_arc < self.node_num || self.next_arc >= arc_total {
            self.next_arc = self.node_num;
        }
        let mut done = 0usize;
        while self.find_entering_arc(block) {
            self.find_join_node();
            let change = self.find_leaving_arc();
            if self.delta == T::infinity() {
                return Err(Error::Numerical("transport problem unbounded".into()));
            }
            self.change_flow(change);
            if change {
                self.update_tree_structure();
                self.update_potential();
            }
            done += 1;
            if done >= max_pivots {
                return Err(Error::NonConvergence {
                    solver: "network simplex",
                    iterations: done,
                    residual: self.artificial_flow().as_f64(),
                });
            }
        }
        Ok(())
    }

    // Non-tree arcs always sit at their lower bound, so no state sign is needed.
    #[inline]
    fn reduced(&self, e: usize) -> T {
        self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]]
    }

    fn find_entering_arc(&mut self, block: usize) -> bool {
        let start = self.node_num;
        let end = self.source.len();
        let mut min = -self.tol;
        let mut cnt = block;
        let mut e = self.next_arc;
        let mut scanned = 0usize;
        let total = end - start;
        while scanned < total {
            if self.state[e] != STATE_TREE {
                let c = self.reduced(e);
                if c < min {
                    min = c;
                    self.in_arc = e;
                }
            }
            scanned += 1;
            e += 1;
            if e == end {
                e = start;
            }
            cnt -= 1;
            if cnt == 0 {
                if min < -self.tol {
                    self.next_arc = e;
                    return true;
                }
                cnt = block;
            }
        }
        if min < -self.tol {
            self.next_arc = e;
            true
        } else {
            false
        }
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        // Entering arcs are always at their lower bound (no capacities).
        let first = self.source[self.in_arc];
        let second = self.target[self.in_arc];
        self.delta = T::infinity();
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[e];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[e];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self, change: bool) {
        let delta = self.delta;
        if delta > T::zero() {
            self.flow[self.in_arc] += delta;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                if self.pred_dir[u] == DIR_UP {
                    self.flow[e] -= delta;
                } else {
                    self.flow[e] += delta;
                }
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                if self.pred_dir[u] == DIR_UP {
                    self.flow[e] += delta;
                } else {
                    self.flow[e] -= delta;
                }
                u = self.parent[u];
            }
        }
        if change {
            self.state[self.in_arc] = STATE_TREE;
            let out = self.pred[self.u_out];
            self.flow[out] = T::zero();
            self.state[out] = STATE_LOWER;
        }
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0isize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] as isize - self.succ_num[p] as isize;
                self.succ_num[u] = tmp_sc as usize;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let c = self.cost[self.in_arc];
        let sigma = if self.pred_dir[u_in] == DIR_UP {
            self.pi[self.v_in] - self.pi[u_in] - c
        } else {
            self.pi[self.v_in] - self.pi[u_in] + c
        };
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }
}
