//! The Tag pursuit domain.
//!
//! A chaser and an opponent move on a 29-cell map:
//!
//! ```text
//!           x=5 6 7
//!   y=4         # # #
//!   y=3         # # #
//!   y=2         # # #
//!   y=1 # # # # # # # # # #
//!   y=0 # # # # # # # # # #
//!       x=0             x=9
//! ```
//!
//! State `chaser · 30 + opponent`, where opponent index 29 means tagged.
//! Actions north, east, south, west, tag. The chaser sees its own cell, or a
//! dedicated observation when it shares the opponent's cell.

use std::sync::Arc;

use crate::model::{ActionModel, Belief, Pomdp, SparseRows};

pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;
pub const TAG: usize = 4;

pub const TAG_REWARD: f64 = 10.0;
pub const MISSED_TAG_REWARD: f64 = -10.0;
pub const MOVE_REWARD: f64 = -1.0;
/// Probability that the opponent stays put even when it could flee.
pub const OPPONENT_STAY: f64 = 0.2;
pub const DISCOUNT: f64 = 0.95;

const MOVES: [(i32, i32); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

/// Cell coordinates of a Tag map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagLayout {
    cells: Vec<(i32, i32)>,
}

impl TagLayout {
    pub fn new(cells: Vec<(i32, i32)>) -> Self {
        Self { cells }
    }

    /// Two 10-cell rows with a 3×3 block above columns 5–7.
    pub fn standard() -> Self {
        let mut cells = Vec::with_capacity(29);
        for y in 0..2 {
            for x in 0..10 {
                cells.push((x, y));
            }
        }
        for y in 2..5 {
            for x in 5..8 {
                cells.push((x, y));
            }
        }
        Self { cells }
    }

    pub fn cells(&self) -> &[(i32, i32)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn index(&self, at: (i32, i32)) -> Option<usize> {
        self.cells.iter().position(|&c| c == at)
    }

    /// Cell reached from `cell` by `mv`, staying put when blocked.
    pub fn step(&self, cell: usize, mv: usize) -> usize {
        let (x, y) = self.cells[cell];
        let (dx, dy) = MOVES[mv];
        self.index((x + dx, y + dy)).unwrap_or(cell)
    }

    /// Opponent move distribution given the chaser's cell.
    ///
    /// On each axis the opponent steps away from the chaser with probability
    /// 0.4, or 0.2 in each direction when they share that coordinate. It
    /// stays with the remaining 0.2, and blocked steps also stay.
    pub fn opponent_moves(&self, chaser: usize, opponent: usize) -> Vec<(usize, f64)> {
        let (cx, cy) = self.cells[chaser];
        let (ox, oy) = self.cells[opponent];
        let share = (1.0 - OPPONENT_STAY) / 2.0;
        let axis = |c: i32, o: i32, up: usize, down: usize| -> Vec<(usize, f64)> {
            match c.cmp(&o) {
                std::cmp::Ordering::Less => vec![(up, share)],
                std::cmp::Ordering::Greater => vec![(down, share)],
                std::cmp::Ordering::Equal => vec![(up, share / 2.0), (down, share / 2.0)],
            }
        };
        let mut out: Vec<(usize, f64)> = vec![(opponent, OPPONENT_STAY)];
        for (mv, p) in axis(cx, ox, EAST, WEST).into_iter().chain(axis(cy, oy, NORTH, SOUTH)) {
            let to = self.step(opponent, mv);
            match out.iter_mut().find(|e| e.0 == to) {
                Some(e) => e.1 += p,
                None => out.push((to, p)),
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }
}

/// State index of `(chaser, opponent)`; `opponent == layout.len()` is tagged.
pub fn state_index(layout: &TagLayout, chaser: usize, opponent: usize) -> usize {
    chaser * (layout.len() + 1) + opponent
}

pub fn is_tagged(layout: &TagLayout, state: usize) -> bool {
    state % (layout.len() + 1) == layout.len()
}

/// Every tagged state of the layout.
pub fn tagged_states(layout: &TagLayout) -> Vec<usize> {
    (0..layout.len()).map(|c| state_index(layout, c, layout.len())).collect()
}

pub fn build_tag() -> Pomdp {
    build_tag_on(&TagLayout::standard())
}

pub fn build_tag_on(layout: &TagLayout) -> Pomdp {
    let n = layout.len();
    let ns = n * (n + 1);
    let tagged = n;
    let co_located_obs = n;

    let observation = Arc::new(SparseRows::from_rows(
        (0..ns).map(|s| {
            let (c, o) = (s / (n + 1), s % (n + 1));
            std::iter::once((if o == c { co_located_obs } else { c }, 1.0))
        }),
        n + 1,
    ));

    let actions = (0..5)
        .map(|a| {
            let mut reward = vec![0.0; ns];
            let rows = (0..ns).map(|s| {
                let (c, o) = (s / (n + 1), s % (n + 1));
                if o == tagged {
                    return vec![(s, 1.0)];
                }
                if a == TAG && c == o {
                    reward[s] = TAG_REWARD;
                    return vec![(state_index(layout, c, tagged), 1.0)];
                }
                reward[s] = if a == TAG { MISSED_TAG_REWARD } else { MOVE_REWARD };
                let c2 = if a == TAG { c } else { layout.step(c, a) };
                let mut row: Vec<(usize, f64)> = layout
                    .opponent_moves(c, o)
                    .into_iter()
                    .map(|(o2, p)| (state_index(layout, c2, o2), p))
                    .collect();
                row.sort_by_key(|e| e.0);
                row
            });
            let transition = SparseRows::from_rows(rows.collect::<Vec<_>>(), ns);
            ActionModel {
                transition,
                observation: Arc::clone(&observation),
                reward: reward.into(),
            }
        })
        .collect();

    let mut b0 = vec![0.0; ns];
    let live = (n * n) as f64;
    for c in 0..n {
        for o in 0..n {
            b0[state_index(layout, c, o)] = 1.0 / live;
        }
    }
    Pomdp::new(actions, DISCOUNT, Belief::new(b0).expect("uniform start")).expect("Tag model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use crate::qmdp::solve_mdp;

    #[test]
    fn sizes_match_benchmark_table() {
        let m = build_tag();
        assert_eq!((m.num_states(), m.num_actions(), m.num_observations()), (870, 5, 30));
        assert!(validate(&m).is_ok());
    }

    #[test]
    fn tagging_when_co_located() {
        let layout = TagLayout::standard();
        let m = build_tag();
        let s = state_index(&layout, 7, 7);
        assert_eq!(m.reward(s, TAG), 10.0);
        let t = state_index(&layout, 7, 29);
        assert_eq!(m.p_transition(s, TAG, t), 1.0);
        assert_eq!(m.reward(state_index(&layout, 7, 8), TAG), -10.0);
        assert_eq!(m.reward(s, NORTH), -1.0);
        assert_eq!(m.p_observation(NORTH, s, 29), 1.0);
        assert_eq!(m.p_observation(NORTH, state_index(&layout, 7, 8), 7), 1.0);
    }

    #[test]
    fn tagged_states_absorb_with_zero_reward() {
        let layout = TagLayout::standard();
        let m = build_tag();
        for s in tagged_states(&layout) {
            for a in 0..5 {
                assert_eq!(m.p_transition(s, a, s), 1.0);
                assert_eq!(m.reward(s, a), 0.0);
            }
        }
    }

    #[test]
    fn opponent_distribution_is_proper_and_sticky() {
        let layout = TagLayout::standard();
        for c in 0..29 {
            for o in 0..29 {
                let d = layout.opponent_moves(c, o);
                let total: f64 = d.iter().map(|e| e.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
                let stay = d.iter().find(|e| e.0 == o).map_or(0.0, |e| e.1);
                assert!(stay >= OPPONENT_STAY - 1e-12);
            }
        }
        // Opponent in the south-west corner, chaser three cells east: west and south are blocked.
        let close = |got: Vec<(usize, f64)>, want: &[(usize, f64)]| {
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(want) {
                assert!(g.0 == w.0 && (g.1 - w.1).abs() < 1e-12, "{got:?}");
            }
        };
        close(layout.opponent_moves(3, 0), &[(0, 0.8), (10, 0.2)]);
        // Chaser on the opponent's cell in the open block: both axes split.
        close(layout.opponent_moves(24, 24), &[(21, 0.2), (23, 0.2), (24, 0.2), (25, 0.2), (27, 0.2)]);
        // Same on the bottom-row edge: north is blocked.
        close(layout.opponent_moves(11, 11), &[(1, 0.2), (10, 0.2), (11, 0.4), (12, 0.2)]);
    }

    #[test]
    fn chaser_moves_are_deterministic_and_blocked_at_walls() {
        let layout = TagLayout::standard();
        assert_eq!(layout.step(0, WEST), 0);
        assert_eq!(layout.step(0, SOUTH), 0);
        assert_eq!(layout.step(0, EAST), 1);
        assert_eq!(layout.step(15, NORTH), 20);
        assert_eq!(layout.step(14, NORTH), 14);
    }

    #[test]
    fn qmdp_values_respect_map_symmetry() {
        // A layout symmetric under x -> 8 - x.
        let mut cells = Vec::new();
        for y in 0..2 {
            for x in 0..9 {
                cells.push((x, y));
            }
        }
        for y in 2..4 {
            for x in 3..6 {
                cells.push((x, y));
            }
        }
        let layout = TagLayout::new(cells.clone());
        let n = layout.len();
        let mirror: Vec<usize> = cells.iter().map(|&(x, y)| layout.index((8 - x, y)).unwrap()).collect();
        let relabel = |s: usize| {
            let (c, o) = (s / (n + 1), s % (n + 1));
            state_index(&layout, mirror[c], if o == n { n } else { mirror[o] })
        };
        let model = build_tag_on(&layout);
        let q = solve_mdp(&model, 1e-10).unwrap();
        // East and west swap under the mirror.
        let swap = [NORTH, WEST, SOUTH, EAST, TAG];
        for s in 0..model.num_states() {
            for a in 0..5 {
                assert!((q.q[a][s] - q.q[swap[a]][relabel(s)]).abs() < 1e-8);
            }
        }
    }
}
