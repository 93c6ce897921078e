//! Search planning over the target deck: cell sizing from the camera
//! footprint, an outward spiral over the grid and the map to world
//! waypoints.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid cell in deck-aligned index space, relative to the start cell.
pub type Cell = (i32, i32);

/// Spiral direction order: +y, +x, -y, -x.
pub const DIRECTIONS: [Cell; 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cells along the deck x axis.
    pub rows: usize,
    /// Cells along the deck y axis.
    pub cols: usize,
    pub cell: f64,
    pub center: [f64; 2],
    pub yaw: f64,
    /// Start cell position relative to the deck centre, in cells. Zero for
    /// odd grid dimensions.
    pub start_offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePath {
    pub grid: GridSpec,
    pub cells: Vec<Cell>,
    pub waypoints: Vec<Waypoint>,
    pub altitude: f64,
}

/// Side of a square cell whose centre view covers it at height `z`.
pub fn cell_size(z: f64, v_fov: f64, h_fov: f64) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidArgument(format!("height must be positive, got {z}")));
    }
    for fov in [v_fov, h_fov] {
        if !(fov > 0.0 && fov < PI) {
            return Err(Error::InvalidArgument(format!(
                "field of view must lie in (0, pi), got {fov}"
            )));
        }
    }
    Ok(2.0 * z * (v_fov / 2.0).tan().max((h_fov / 2.0).tan()))
}

/// Deck-to-world rotation `[[c, s], [-s, c]]`.
pub fn deck_rotate(yaw: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
}

/// Inverse of [`deck_rotate`].
pub fn deck_unrotate(yaw: f64, v: [f64; 2]) -> [f64; 2] {
    deck_rotate(-yaw, v)
}

fn turn_cw(d: Cell) -> Cell {
    (d.1, -d.0)
}

fn turn_ccw(d: Cell) -> Cell {
    (-d.1, d.0)
}

/// Boundary-following spiral from a corner towards the middle.
fn inward(m: i32, n: i32, start: Cell, dir: Cell, clockwise: bool) -> Vec<Cell> {
    let total = (m * n) as usize;
    let mut seen = vec![false; total];
    let idx = |c: Cell| (c.0 * n + c.1) as usize;
    let inside = |c: Cell| c.0 >= 0 && c.0 < m && c.1 >= 0 && c.1 < n;
    let mut path = Vec::with_capacity(total);
    let (mut cur, mut d) = (start, dir);
    seen[idx(cur)] = true;
    path.push(cur);
    while path.len() < total {
        let mut moved = false;
        for _ in 0..2 {
            let next = (cur.0 + d.0, cur.1 + d.1);
            if inside(next) && !seen[idx(next)] {
                cur = next;
                seen[idx(cur)] = true;
                path.push(cur);
                moved = true;
                break;
            }
            d = if clockwise { turn_cw(d) } else { turn_ccw(d) };
        }
        if !moved {
            break;
        }
    }
    path
}

/// Outward spiral covering an `m` x `n` grid, relative to its start cell,
/// together with the start cell's absolute index.
///
/// Built by reversing a boundary-following inward spiral, which covers any
/// rectangle exactly once, and picking the one that starts nearest the
/// middle and turns through `DIRECTIONS` in order.
pub fn spiral_with_start(m: usize, n: usize) -> (Vec<Cell>, Cell) {
    assert!(m >= 1 && n >= 1, "grid must have at least one cell");
    let (mi, ni) = (m as i32, n as i32);
    let corners = [(0, 0), (mi - 1, 0), (0, ni - 1), (mi - 1, ni - 1)];
    let mid = ((mi - 1) as f64 / 2.0, (ni - 1) as f64 / 2.0);

    let mut best: Option<((u8, i64, usize), Vec<Cell>)> = None;
    for &corner in &corners {
        for &dir in &DIRECTIONS {
            let first = (corner.0 + dir.0, corner.1 + dir.1);
            let fits = m * n == 1 || (first.0 >= 0 && first.0 < mi && first.1 >= 0 && first.1 < ni);
            if !fits {
                continue;
            }
            for clockwise in [false, true] {
                let mut path = inward(mi, ni, corner, dir, clockwise);
                if path.len() != m * n {
                    continue;
                }
                path.reverse();
                let turns_ok = path.windows(3).all(|w| {
                    let a = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                    let b = (w[2].0 - w[1].0, w[2].1 - w[1].1);
                    a == b || b == turn_cw(a)
                });
                let s = path[0];
                let dist = ((s.0 as f64 - mid.0).powi(2) + (s.1 as f64 - mid.1).powi(2)) * 4.0;
                let first_dir = path
                    .get(1)
                    .map(|c| (c.0 - s.0, c.1 - s.1))
                    .and_then(|d| DIRECTIONS.iter().position(|&x| x == d))
                    .unwrap_or(0);
                let key = (u8::from(!turns_ok), dist.round() as i64, first_dir);
                if best.as_ref().is_none_or(|(k, _)| key < *k) {
                    best = Some((key, path));
                }
            }
        }
    }
    let path = best.map(|(_, p)| p).unwrap_or_else(|| vec![(0, 0)]);
    let start = path[0];
    let rel = path.iter().map(|c| (c.0 - start.0, c.1 - start.1)).collect();
    (rel, start)
}

pub fn spiral_path(m: usize, n: usize) -> Vec<Cell> {
    spiral_with_start(m, n).0
}

/// `p = L [[C, S], [-S, C]] [x, y] + [d_x, d_y]`, with the start offset
/// folded into the cell coordinates.
pub fn to_world(cells: &[Cell], spec: &GridSpec) -> Vec<[f64; 2]> {
    cells
        .iter()
        .map(|&(x, y)| {
            let local = [
                spec.cell * (x as f64 + spec.start_offset[0]),
                spec.cell * (y as f64 + spec.start_offset[1]),
            ];
            let r = deck_rotate(spec.yaw, local);
            [r[0] + spec.center[0], r[1] + spec.center[1]]
        })
        .collect()
}

/// Heading offsets alternating between 0 and pi along the path.
pub fn yaw_schedule(n: usize) -> Vec<f64> {
    (0..n).map(|k| if k % 2 == 0 { 0.0 } else { PI }).collect()
}

/// Deck geometry the planner needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeckPose {
    pub center: [f64; 2],
    pub yaw: f64,
    pub size: [f64; 2],
    pub height: f64,
}

/// Full search plan at `altitude` above the deck surface.
pub fn plan_search(deck: &DeckPose, altitude: f64, v_fov: f64, h_fov: f64) -> Result<CoveragePath> {
    let cell = cell_size(altitude, v_fov, h_fov)?;
    if !(deck.size[0] > 0.0 && deck.size[1] > 0.0) {
        return Err(Error::InvalidArgument("deck size must be positive".into()));
    }
    let rows = (deck.size[0] / cell).ceil().max(1.0) as usize;
    let cols = (deck.size[1] / cell).ceil().max(1.0) as usize;
    let (cells, start) = spiral_with_start(rows, cols);
    let grid = GridSpec {
        rows,
        cols,
        cell,
        center: deck.center,
        yaw: deck.yaw,
        start_offset: [
            start.0 as f64 - (rows as f64 - 1.0) / 2.0,
            start.1 as f64 - (cols as f64 - 1.0) / 2.0,
        ],
    };
    let xy = to_world(&cells, &grid);
    let yaws = yaw_schedule(cells.len());
    let z = deck.height + altitude;
    let waypoints = xy
        .iter()
        .zip(&yaws)
        .map(|(p, &yaw)| Waypoint { x: p[0], y: p[1], z, yaw })
        .collect();
    Ok(CoveragePath {
        grid,
        cells,
        waypoints,
        altitude,
    })
}

/// Altitude for the next search pass after a full pass found nothing.
pub fn next_search_altitude(current: f64, step: f64, min: f64) -> Option<f64> {
    let next = current - step;
    (next >= min - 1e-9).then_some(next.max(min))
}
