//! PNG rendering of layouts with room-connection overlays.

use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, LayoutEnv};
use crate::grid::{CellCoord, CellState, LayoutGrid, Region, WallId};
use crate::laser::adjacency_matrix;
use crate::palette::{self, Rgb};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderStyle {
    pub cell_px: u32,
    pub line_px: u32,
    pub achieved: Rgb,
    pub missed: Rgb,
    pub extra: Rgb,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            cell_px: 24,
            line_px: 3,
            achieved: [0, 170, 0],
            missed: [220, 0, 0],
            extra: [0, 60, 230],
        }
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cell_px and line_px must be positive")]
    BadStyle,
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    /// Desired pair that shares a wall.
    Achieved,
    /// Desired pair that does not.
    Missed,
    /// Connected pair nobody asked for.
    Extra,
}

/// A centroid-to-centroid segment between rooms `a < b` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connection {
    pub a: usize,
    pub b: usize,
    pub kind: LineKind,
}

/// Classifies every desired pair and every extra connection among `rooms`.
/// Desired pairs naming rooms that do not exist yet are skipped.
pub fn connections(grid: &LayoutGrid, rooms: &[Region], desired: &[(usize, usize)]) -> Vec<Connection> {
    let adj = adjacency_matrix(grid, rooms);
    let n = rooms.len();
    let norm = |(a, b): (usize, usize)| (a.min(b), a.max(b));
    let mut wanted: Vec<(usize, usize)> = desired.iter().copied().map(norm).filter(|&(a, b)| a >= 1 && b <= n && a != b).collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut out: Vec<Connection> = wanted
        .iter()
        .map(|&(a, b)| Connection {
            a,
            b,
            kind: if adj.connected(a, b) { LineKind::Achieved } else { LineKind::Missed },
        })
        .collect();
    out.extend(
        adj.pairs()
            .filter(|p| wanted.binary_search(p).is_err())
            .map(|(a, b)| Connection { a, b, kind: LineKind::Extra }),
    );
    out
}

/// Draws the grid, fills `rooms` (room `k` is `rooms[k - 1]`) and overlays the connections.
pub fn render_layout(
    grid: &LayoutGrid,
    rooms: &[Region],
    desired: &[(usize, usize)],
    style: &RenderStyle,
) -> Result<RgbImage, RenderError> {
    if style.cell_px == 0 || style.line_px == 0 {
        return Err(RenderError::BadStyle);
    }
    let (w, h) = (grid.width() as u32, grid.height() as u32);
    let px = style.cell_px;
    let mut fill = vec![None; grid.cells().len()];
    for (k, room) in rooms.iter().enumerate() {
        for &c in room.cells() {
            fill[grid.index(c)] = Some(palette::room_fill(k + 1));
        }
    }
    let mut img = RgbImage::new(w * px, h * px);
    for (idx, state) in grid.cells().iter().enumerate() {
        let color = match *state {
            CellState::Free => fill[idx].unwrap_or(palette::FREE),
            CellState::Masked => palette::MASKED,
            CellState::WallHard(WallId(k)) => palette::wall_hard(k),
            CellState::WallSoft(WallId(k)) => palette::wall_soft(k),
        };
        let c = grid.coord(idx);
        let (x0, y0) = (c.x as u32 * px, (h - 1 - c.y as u32) * px);
        for y in y0..y0 + px {
            for x in x0..x0 + px {
                img.put_pixel(x, y, image::Rgb(color));
            }
        }
    }
    let center = |r: &Region| {
        let (cx, cy) = r.centroid();
        ((cx + 0.5) * px as f64, (h as f64 - cy - 0.5) * px as f64)
    };
    for conn in connections(grid, rooms, desired) {
        let color = match conn.kind {
            LineKind::Achieved => style.achieved,
            LineKind::Missed => style.missed,
            LineKind::Extra => style.extra,
        };
        draw_segment(&mut img, center(&rooms[conn.a - 1]), center(&rooms[conn.b - 1]), style.line_px as f64, color);
    }
    Ok(img)
}

/// Renders the env's current rooms (plus the residual once the episode is over).
pub fn render_env(env: &LayoutEnv, style: &RenderStyle) -> Result<RgbImage, RenderError> {
    render_layout(env.layout().grid(), &env.current_rooms(), &env.scenario().desired_adjacencies, style)
}

/// Rebuilds an episode state by replaying `actions` after `reset(seed)`.
pub fn replay(scenario: &Scenario, config: EnvConfig, seed: u64, actions: &[i64]) -> Result<LayoutEnv, EnvError> {
    let mut env = LayoutEnv::new(scenario.clone(), config)?;
    env.reset(seed);
    for &a in actions {
        if env.is_done() {
            break;
        }
        env.step(a)?;
    }
    Ok(env)
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<(), RenderError> {
    img.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

/// Paints every pixel whose center lies within `width / 2` of the segment.
fn draw_segment(img: &mut RgbImage, p: (f64, f64), q: (f64, f64), width: f64, color: Rgb) {
    let r = width / 2.0;
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let len2 = dx * dx + dy * dy;
    let clamp = |v: f64, hi: u32| v.max(0.0).min(hi as f64 - 1.0) as u32;
    let (x0, x1) = (clamp(p.0.min(q.0) - r, img.width()), clamp(p.0.max(q.0) + r, img.width()));
    let (y0, y1) = (clamp(p.1.min(q.1) - r, img.height()), clamp(p.1.max(q.1) + r, img.height()));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 == 0.0 { 0.0 } else { (((cx - p.0) * dx + (cy - p.1) * dy) / len2).clamp(0.0, 1.0) };
            let (ex, ey) = (cx - p.0 - t * dx, cy - p.1 - t * dy);
            if ex * ex + ey * ey <= r * r {
                img.put_pixel(x, y, image::Rgb(color));
            }
        }
    }
}

/// Pixel center of cell `c` in an image rendered with `cell_px`.
pub fn cell_center_px(grid: &LayoutGrid, c: CellCoord, cell_px: u32) -> (u32, u32) {
    let h = grid.height() as u32;
    (c.x as u32 * cell_px + cell_px / 2, (h - 1 - c.y as u32) * cell_px + cell_px / 2)
}
