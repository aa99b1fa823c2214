//! Finite MDPs, the grid and four-rooms builders, and single-step simulation.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::{check_distribution, sample_index, StochasticPolicy};

pub type StateId = usize;
pub type ActionId = usize;

/// `(row, column)` with row 0 at the top.
pub type Cell = (usize, usize);

pub const LEFT: ActionId = 0;
pub const RIGHT: ActionId = 1;
pub const UP: ActionId = 2;
pub const DOWN: ActionId = 3;
pub const N_GRID_ACTIONS: usize = 4;

/// Tolerance on every transition row sum.
pub const KERNEL_TOL: f64 = 1e-12;

/// A goal cell tied to the GVF (cumulant process) that pays there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GoalCell {
    pub cell: Cell,
    pub gvf: usize,
}

#[derive(Clone, Debug, Default)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub walls: BTreeSet<Cell>,
    pub goal_cells: Vec<GoalCell>,
}

impl GridSpec {
    pub fn open(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    pub fn with_goal(mut self, cell: Cell, gvf: usize) -> Self {
        self.goal_cells.push(GoalCell { cell, gvf });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid("width and height must be positive".into()));
        }
        let inside = |&(r, c): &Cell| r < self.height && c < self.width;
        if let Some(w) = self.walls.iter().find(|w| !inside(w)) {
            return Err(Error::InvalidGrid(format!("wall {w:?} outside the grid")));
        }
        for g in &self.goal_cells {
            if !inside(&g.cell) {
                return Err(Error::InvalidGrid(format!("goal {:?} outside the grid", g.cell)));
            }
            if self.walls.contains(&g.cell) {
                return Err(Error::InvalidGrid(format!("goal {:?} is a wall", g.cell)));
            }
        }
        Ok(())
    }

    /// Internal four-rooms walls for this grid size: one full wall row and
    /// one full wall column, each with a doorway into every room pair.
    /// For 20×20 the walls are row 9 and column 9 with doorways at
    /// (9,2), (9,14), (4,9), (14,9).
    pub fn fourrooms_walls(width: usize, height: usize) -> Result<(BTreeSet<Cell>, [Cell; 4])> {
        if width < 5 || height < 5 {
            return Err(Error::InvalidGrid("four-rooms needs at least 5×5".into()));
        }
        let wall_row = (height - 1) / 2;
        let wall_col = (width - 1) / 2;
        let doors = [
            (wall_row, wall_col / 4),
            (wall_row, wall_col + (width - wall_col - 1) / 2),
            (wall_row / 2, wall_col),
            (wall_row + (height - wall_row - 1) / 2, wall_col),
        ];
        let mut walls = BTreeSet::new();
        for c in 0..width {
            walls.insert((wall_row, c));
        }
        for r in 0..height {
            walls.insert((r, wall_col));
        }
        for d in &doors {
            walls.remove(d);
        }
        Ok((walls, doors))
    }
}

/// Cell bookkeeping for MDPs built from a grid. Wall cells have no state id.
#[derive(Clone, Debug)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    state_of_cell: Vec<Option<StateId>>,
}

impl GridLayout {
    pub fn cell(&self, state: StateId) -> Cell {
        self.cells[state]
    }

    pub fn state(&self, cell: Cell) -> Option<StateId> {
        if cell.0 >= self.height || cell.1 >= self.width {
            return None;
        }
        self.state_of_cell[cell.0 * self.width + cell.1]
    }
}

/// Finite episodic MDP with a sparse transition kernel.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Sparse row for each `(state, action)`, indexed `state * n_actions + action`.
    rows: Vec<Vec<(StateId, f64)>>,
    terminal: Vec<bool>,
    start_distribution: Vec<f64>,
    slip_probability: f64,
    episode_cap: usize,
    layout: Option<GridLayout>,
}

impl TabularMdp {
    /// Builds an MDP from a dense kernel `transition[s][a][s']`.
    ///
    /// Terminal rows are overwritten with a self-loop so that terminal
    /// states are absorbing regardless of what the caller supplied.
    pub fn from_dense(
        transition: &[Vec<Vec<f64>>],
        terminal: Vec<bool>,
        start_distribution: Vec<f64>,
        episode_cap: usize,
    ) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(n_states * n_actions);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    context: "actions per state",
                    expected: n_actions,
                    actual: per_action.len(),
                });
            }
            for row in per_action {
                if row.len() != n_states {
                    return Err(Error::DimensionMismatch {
                        context: "transition row",
                        expected: n_states,
                        actual: row.len(),
                    });
                }
                if terminal.get(s).copied().unwrap_or(false) {
                    rows.push(vec![(s, 1.0)]);
                } else {
                    rows.push(
                        row.iter()
                            .enumerate()
                            .filter(|(_, &p)| p != 0.0)
                            .map(|(t, &p)| (t, p))
                            .collect(),
                    );
                }
            }
        }
        Self::from_sparse(
            n_states,
            n_actions,
            rows,
            terminal,
            start_distribution,
            0.0,
            episode_cap,
        )
    }

    pub fn from_sparse(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<(StateId, f64)>>,
        terminal: Vec<bool>,
        start_distribution: Vec<f64>,
        slip_probability: f64,
        episode_cap: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("need at least one state and one action".into()));
        }
        if episode_cap == 0 {
            return Err(Error::InvalidMdp("episode cap must be positive".into()));
        }
        if !(0.0..=1.0).contains(&slip_probability) {
            return Err(Error::InvalidProbability {
                name: "slip",
                value: slip_probability,
            });
        }
        if rows.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                context: "kernel rows",
                expected: n_states * n_actions,
                actual: rows.len(),
            });
        }
        if terminal.len() != n_states || start_distribution.len() != n_states {
            return Err(Error::DimensionMismatch {
                context: "terminal/start vectors",
                expected: n_states,
                actual: terminal.len().min(start_distribution.len()),
            });
        }
        for (idx, row) in rows.iter().enumerate() {
            let (s, a) = (idx / n_actions, idx % n_actions);
            let mut sum = 0.0;
            for &(t, p) in row {
                if t >= n_states || !(p.is_finite() && p >= 0.0) {
                    return Err(Error::InvalidMdp(format!("bad entry ({t}, {p}) in row ({s},{a})")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > KERNEL_TOL {
                return Err(Error::NotStochastic {
                    row: format!("P(·|{s},{a})"),
                    sum,
                });
            }
            if terminal[s] && row.iter().any(|&(t, p)| t != s && p > 0.0) {
                return Err(Error::InvalidMdp(format!("terminal state {s} is not absorbing")));
            }
        }
        check_distribution(&start_distribution, "start distribution", KERNEL_TOL)?;
        if start_distribution.iter().zip(&terminal).any(|(&p, &t)| t && p > 0.0) {
            return Err(Error::InvalidMdp(
                "start distribution puts mass on a terminal state".into(),
            ));
        }
        Ok(Self {
            n_states,
            n_actions,
            rows,
            terminal,
            start_distribution,
            slip_probability,
            episode_cap,
            layout: None,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    pub fn slip_probability(&self) -> f64 {
        self.slip_probability
    }

    pub fn is_terminal(&self, state: StateId) -> bool {
        self.terminal[state]
    }

    pub fn start_distribution(&self) -> &[f64] {
        &self.start_distribution
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    pub fn non_terminal_states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.n_states).filter(|&s| !self.terminal[s])
    }

    pub fn row(&self, state: StateId, action: ActionId) -> &[(StateId, f64)] {
        &self.rows[state * self.n_actions + action]
    }

    /// `P(next | state, action)` looked up in the sparse row.
    pub fn prob(&self, state: StateId, action: ActionId, next: StateId) -> f64 {
        self.row(state, action)
            .iter()
            .filter(|(t, _)| *t == next)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> StateId {
        sample_index(&self.start_distribution, rng.random::<f64>())
    }

    /// Samples the successor of a non-terminal state.
    ///
    /// # Panics
    /// If `state` is terminal.
    pub fn step<R: Rng + ?Sized>(&self, state: StateId, action: ActionId, rng: &mut R) -> (StateId, bool) {
        assert!(!self.terminal[state], "step called from terminal state {state}");
        let row = self.row(state, action);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = row[row.len() - 1].0;
        for &(t, p) in row {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        (next, self.terminal[next])
    }

    /// State-to-state kernel `P_π[s, s'] = Σ_a π(a|s) P(s'|s,a)`.
    pub fn transition_matrix<P: StochasticPolicy + ?Sized>(&self, policy: &P) -> Result<DMatrix<f64>> {
        self.check_policy_shape(policy)?;
        let mut m = DMatrix::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for &(t, p) in self.row(s, a) {
                    m[(s, t)] += pa * p;
                }
            }
        }
        Ok(m)
    }

    pub(crate) fn check_policy_shape<P: StochasticPolicy + ?Sized>(&self, policy: &P) -> Result<()> {
        if policy.n_states() != self.n_states {
            return Err(Error::DimensionMismatch {
                context: "policy states",
                expected: self.n_states,
                actual: policy.n_states(),
            });
        }
        if policy.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch {
                context: "policy actions",
                expected: self.n_actions,
                actual: policy.n_actions(),
            });
        }
        Ok(())
    }
}

/// One environment step as seen by the learners.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: StateId,
    pub action: ActionId,
    pub next_state: StateId,
    pub cumulant_values: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

impl Transition {
    pub fn new(
        state: StateId,
        action: ActionId,
        next_state: StateId,
        cumulant_values: Vec<f64>,
        terminated: bool,
        truncated: bool,
    ) -> Self {
        assert!(
            !(terminated && truncated),
            "a transition cannot be both terminated and truncated"
        );
        Self {
            state,
            action,
            next_state,
            cumulant_values,
            terminated,
            truncated,
        }
    }
}

fn displaced(cell: Cell, action: ActionId, spec: &GridSpec) -> Cell {
    let (r, c) = cell;
    let target = match action {
        LEFT if c > 0 => (r, c - 1),
        RIGHT if c + 1 < spec.width => (r, c + 1),
        UP if r > 0 => (r - 1, c),
        DOWN if r + 1 < spec.height => (r + 1, c),
        _ => cell,
    };
    if spec.walls.contains(&target) {
        cell
    } else {
        target
    }
}

/// Four-action gridworld. With probability `slip` the executed action is
/// replaced by one drawn uniformly from all four; blocked moves stay put.
/// Goal cells are terminal.
pub fn build_gridworld(spec: &GridSpec, slip: f64, cap: usize) -> Result<TabularMdp> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::InvalidProbability {
            name: "slip",
            value: slip,
        });
    }

    let mut cells = Vec::new();
    let mut state_of_cell = vec![None; spec.width * spec.height];
    for r in 0..spec.height {
        for c in 0..spec.width {
            if !spec.walls.contains(&(r, c)) {
                state_of_cell[r * spec.width + c] = Some(cells.len());
                cells.push((r, c));
            }
        }
    }
    let layout = GridLayout {
        width: spec.width,
        height: spec.height,
        cells,
        state_of_cell,
    };
    let n_states = layout.cells.len();
    let goals: BTreeSet<Cell> = spec.goal_cells.iter().map(|g| g.cell).collect();
    let terminal: Vec<bool> = layout.cells.iter().map(|c| goals.contains(c)).collect();
    let n_live = terminal.iter().filter(|t| !**t).count();
    if n_live == 0 {
        return Err(Error::InvalidGrid("no non-terminal states".into()));
    }

    let mut rows = Vec::with_capacity(n_states * N_GRID_ACTIONS);
    for (s, &cell) in layout.cells.iter().enumerate() {
        for a in 0..N_GRID_ACTIONS {
            if terminal[s] {
                rows.push(vec![(s, 1.0)]);
                continue;
            }
            let mut row: Vec<(StateId, f64)> = Vec::with_capacity(N_GRID_ACTIONS + 1);
            for executed in 0..N_GRID_ACTIONS {
                let p = if executed == a { 1.0 - slip } else { 0.0 } + slip / N_GRID_ACTIONS as f64;
                if p == 0.0 {
                    continue;
                }
                let t = layout
                    .state(displaced(cell, executed, spec))
                    .expect("moves never enter walls");
                match row.iter_mut().find(|(x, _)| *x == t) {
                    Some(entry) => entry.1 += p,
                    None => row.push((t, p)),
                }
            }
            row.sort_by_key(|(t, _)| *t);
            rows.push(row);
        }
    }

    let start = terminal
        .iter()
        .map(|&t| if t { 0.0 } else { 1.0 / n_live as f64 })
        .collect();
    let mut mdp = TabularMdp::from_sparse(n_states, N_GRID_ACTIONS, rows, terminal, start, slip, cap)?;
    mdp.layout = Some(layout);
    Ok(mdp)
}

/// Gridworld with the four-rooms internal walls added to `spec.walls`.
pub fn build_fourrooms(spec: &GridSpec, slip: f64, cap: usize) -> Result<TabularMdp> {
    spec.validate()?;
    let (internal, _) = GridSpec::fourrooms_walls(spec.width, spec.height)?;
    let mut full = spec.clone();
    full.walls.extend(internal);
    build_gridworld(&full, slip, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row_sum(mdp: &TabularMdp, s: StateId, a: ActionId) -> f64 {
        mdp.row(s, a).iter().map(|(_, p)| p).sum()
    }

    #[test]
    fn open_20x20_grid() {
        let spec = GridSpec::open(20, 20).with_goal((0, 0), 0);
        let mdp = build_gridworld(&spec, 0.1, 500).unwrap();
        assert_eq!(mdp.n_states(), 400);
        assert_eq!(mdp.n_actions(), 4);
        assert_eq!(mdp.episode_cap(), 500);
        let goal = mdp.layout().unwrap().state((0, 0)).unwrap();
        assert!(mdp.is_terminal(goal));
        assert_eq!(mdp.non_terminal_states().count(), 399);
        for s in 0..400 {
            for a in 0..4 {
                assert!((row_sum(&mdp, s, a) - 1.0).abs() <= KERNEL_TOL);
            }
        }
        assert_eq!(mdp.start_distribution()[goal], 0.0);
    }

    #[test]
    fn degenerate_two_cell_chain() {
        let spec = GridSpec::open(2, 1).with_goal((0, 1), 0);
        let mdp = build_gridworld(&spec, 0.0, 10).unwrap();
        assert_eq!(mdp.n_states(), 2);
        assert_eq!(mdp.row(0, RIGHT), &[(1, 1.0)]);
        assert_eq!(mdp.row(0, LEFT), &[(0, 1.0)]);
        assert_eq!(mdp.row(0, UP), &[(0, 1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mdp.step(0, RIGHT, &mut rng), (1, true));
    }

    #[test]
    fn slip_mixture_center_of_3x3() {
        let mdp = build_gridworld(&GridSpec::open(3, 3), 0.1, 10).unwrap();
        let layout = mdp.layout().unwrap();
        let center = layout.state((1, 1)).unwrap();
        let at = |cell| layout.state(cell).unwrap();
        // 0.9 for the chosen move plus 0.1·¼ for each of the four random moves.
        assert!((mdp.prob(center, UP, at((0, 1))) - (0.9 + 0.025)).abs() < 1e-15);
        assert!((mdp.prob(center, UP, at((2, 1))) - 0.025).abs() < 1e-15);
        assert!((mdp.prob(center, UP, at((1, 0))) - 0.025).abs() < 1e-15);
        assert!((mdp.prob(center, UP, at((1, 2))) - 0.025).abs() < 1e-15);
        assert_eq!(mdp.prob(center, UP, center), 0.0);
        // Corner: two of the four moves bump into the boundary.
        let corner = at((0, 0));
        assert!((mdp.prob(corner, UP, corner) - (0.9 + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_gridworld(&GridSpec::open(3, 3), 1.5, 10).is_err());
        assert!(build_gridworld(&GridSpec::open(3, 3), -0.1, 10).is_err());
        let all_goal = GridSpec::open(1, 1).with_goal((0, 0), 0);
        assert!(build_gridworld(&all_goal, 0.1, 10).is_err());
        let outside = GridSpec::open(2, 2).with_goal((5, 0), 0);
        assert!(build_gridworld(&outside, 0.1, 10).is_err());
        let mut on_wall = GridSpec::open(3, 3).with_goal((1, 1), 0);
        on_wall.walls.insert((1, 1));
        assert!(build_gridworld(&on_wall, 0.1, 10).is_err());
    }

    #[test]
    fn fourrooms_layout() {
        let spec = GridSpec::open(20, 20).with_goal((0, 0), 0).with_goal((0, 19), 1);
        let (walls, doors) = GridSpec::fourrooms_walls(20, 20).unwrap();
        assert_eq!(doors, [(9, 2), (9, 14), (4, 9), (14, 9)]);
        // Row 9 and column 9 share (9,9): 39 wall cells before doorways.
        assert_eq!(walls.len(), 39 - 4);
        let mdp = build_fourrooms(&spec, 0.1, 500).unwrap();
        assert_eq!(mdp.n_states(), 400 - 35);
        let layout = mdp.layout().unwrap();
        for w in &walls {
            assert!(layout.state(*w).is_none());
        }
        // Each doorway is entered from both adjacent rooms.
        let at = |cell| layout.state(cell).unwrap();
        assert_eq!(mdp.prob(at((8, 2)), DOWN, at((9, 2))), 0.9 + 0.025);
        assert_eq!(mdp.prob(at((10, 2)), UP, at((9, 2))), 0.9 + 0.025);
        assert_eq!(mdp.prob(at((4, 8)), RIGHT, at((4, 9))), 0.9 + 0.025);
        assert_eq!(mdp.prob(at((4, 10)), LEFT, at((4, 9))), 0.9 + 0.025);
        // Walls block: moving up from (10,5) stays put with the chosen-action mass.
        assert!(mdp.prob(at((10, 5)), UP, at((10, 5))) >= 0.9);
    }

    #[test]
    fn terminal_rows_are_identity() {
        let spec = GridSpec::open(4, 4).with_goal((3, 3), 0);
        let mdp = build_gridworld(&spec, 0.1, 50).unwrap();
        let p = mdp.transition_matrix(&PolicyTable::uniform(16, 4)).unwrap();
        let g = mdp.layout().unwrap().state((3, 3)).unwrap();
        for t in 0..16 {
            assert_eq!(p[(g, t)], if t == g { 1.0 } else { 0.0 });
        }
    }

    #[test]
    #[should_panic]
    fn stepping_from_terminal_panics() {
        let spec = GridSpec::open(2, 1).with_goal((0, 1), 0);
        let mdp = build_gridworld(&spec, 0.0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        mdp.step(1, LEFT, &mut rng);
    }

    #[test]
    fn full_slip_matches_uniform_mixture() {
        // Chi-square goodness of fit against the analytic row, 4 cells + self.
        let mdp = build_gridworld(&GridSpec::open(3, 3), 1.0, 10).unwrap();
        let layout = mdp.layout().unwrap();
        let center = layout.state((1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut counts = vec![0usize; mdp.n_states()];
        for _ in 0..n {
            counts[mdp.step(center, RIGHT, &mut rng).0] += 1;
        }
        let mut chi2 = 0.0;
        for &(t, p) in mdp.row(center, RIGHT) {
            assert!((p - 0.25).abs() < 1e-15);
            let expected = p * n as f64;
            chi2 += (counts[t] as f64 - expected).powi(2) / expected;
        }
        // 3 degrees of freedom; 16.27 is the 0.999 quantile.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn transition_matrix_examples() {
        // Symmetric two-state chain under a uniform policy is doubly stochastic.
        let kernel = vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        ];
        let mdp = TabularMdp::from_dense(&kernel, vec![false; 2], vec![0.5, 0.5], 10).unwrap();
        let p = mdp.transition_matrix(&PolicyTable::uniform(2, 2)).unwrap();
        for i in 0..2 {
            assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
            assert!((p.column(i).sum() - 1.0).abs() < 1e-12);
        }
        // One-hot policy selects rows.
        let det = PolicyTable::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = mdp.transition_matrix(&det).unwrap();
        assert_eq!(p[(0, 1)], 1.0);
        assert_eq!(p[(1, 1)], 1.0);
        // Dimension mismatch.
        assert!(mdp.transition_matrix(&PolicyTable::uniform(3, 2)).is_err());
        assert!(mdp.transition_matrix(&PolicyTable::uniform(2, 3)).is_err());
    }

    #[test]
    fn transition_matrix_matches_sampled_frequencies() {
        let kernel = vec![
            vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]],
            vec![vec![0.0, 0.4, 0.6], vec![0.9, 0.0, 0.1]],
            vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
        ];
        let mdp = TabularMdp::from_dense(&kernel, vec![false, false, true], vec![0.5, 0.5, 0.0], 10).unwrap();
        let pi = PolicyTable::from_rows(vec![vec![0.3, 0.7], vec![0.8, 0.2], vec![0.5, 0.5]]).unwrap();
        let p = mdp.transition_matrix(&pi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        for s in 0..2 {
            let mut counts = [0usize; 3];
            for _ in 0..n {
                let a = sample_index(pi.row(s), rng.random());
                counts[mdp.step(s, a, &mut rng).0] += 1;
            }
            for t in 0..3 {
                let f = counts[t] as f64 / n as f64;
                let se = (p[(s, t)] * (1.0 - p[(s, t)]) / n as f64).sqrt();
                assert!((f - p[(s, t)]).abs() <= 5.0 * se + 1e-12, "s={s} t={t}");
            }
        }
    }
}
