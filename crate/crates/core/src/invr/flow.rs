//! Dinic max-flow, used to complete a greedy allocation along augmenting paths.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
}

#[derive(Debug, Clone)]
pub(crate) struct FlowGraph {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowGraph {
    pub(crate) fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n], edges: Vec::new(), level: vec![0; n], iter: vec![0; n] }
    }

    /// Adds `from -> to` with capacity `cap`, `flow` of which is already used.
    /// Returns the edge handle.
    pub(crate) fn add_edge(&mut self, from: usize, to: usize, cap: i64, flow: i64) -> usize {
        debug_assert!(0 <= flow && flow <= cap);
        let id = self.edges.len();
        self.edges.push(Edge { to, cap: cap - flow });
        self.edges.push(Edge { to: from, cap: flow });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Flow currently on an edge returned by `add_edge`.
    pub(crate) fn flow(&self, edge: usize) -> i64 {
        self.edges[edge + 1].cap
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &e in &self.adj[v] {
                let Edge { to, cap } = self.edges[e];
                if cap > 0 && self.level[to] < 0 {
                    self.level[to] = self.level[v] + 1;
                    q.push_back(to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, pushed: i64) -> i64 {
        if v == t {
            return pushed;
        }
        while self.iter[v] < self.adj[v].len() {
            let e = self.adj[v][self.iter[v]];
            let Edge { to, cap } = self.edges[e];
            if cap > 0 && self.level[to] == self.level[v] + 1 {
                let d = self.dfs(to, t, pushed.min(cap));
                if d > 0 {
                    self.edges[e].cap -= d;
                    self.edges[e ^ 1].cap += d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        0
    }

    /// Augments to a maximum flow; returns the flow added.
    pub(crate) fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, i64::MAX);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}
