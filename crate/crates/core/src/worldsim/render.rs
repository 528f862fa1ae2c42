use super::env::{EpisodeState, IndicatorColor, Pitch};
use super::map::Cell;
use crate::obs::Observation;

pub const VIEW_SIZE: usize = 32;
/// Horizontal field of view in degrees; the camera plane has half-width
/// `tan(fov / 2) = 1`.
pub const FOV_DEGREES: f64 = 90.0;
pub const SHADING: f64 = 0.15;

pub const WALL: [u8; 3] = [128, 128, 128];
pub const RED: [u8; 3] = [220, 40, 40];
pub const BLUE: [u8; 3] = [40, 60, 220];
pub const YELLOW: [u8; 3] = [230, 220, 40];
pub const GREEN: [u8; 3] = [40, 200, 60];
pub const FLOOR: [u8; 3] = [110, 90, 60];
pub const SKY: [u8; 3] = [150, 200, 240];
pub const TILE_LIGHT: [u8; 3] = [240, 240, 240];
pub const TILE_DARK: [u8; 3] = [20, 20, 20];

fn shade(c: [u8; 3], dist: f64) -> [u8; 3] {
    let f = 1.0 / (1.0 + SHADING * dist);
    c.map(|v| (f64::from(v) * f).round() as u8)
}

fn solid_color(cell: Cell, indicator: Option<IndicatorColor>) -> [u8; 3] {
    match cell {
        Cell::Red => RED,
        Cell::Blue => BLUE,
        Cell::Indicator => match indicator {
            Some(IndicatorColor::Green) => GREEN,
            _ => YELLOW,
        },
        _ => WALL,
    }
}

fn floor_color(cell: Cell) -> [u8; 3] {
    match cell {
        Cell::TileLight => TILE_LIGHT,
        Cell::TileDark => TILE_DARK,
        _ => FLOOR,
    }
}

/// First-person view of the episode's current pose.
///
/// Each column casts one ray through the grid (DDA); solid cells are drawn
/// as unit-height slices of `32 / perp` rows centred on the horizon. The
/// horizon is row 16 when level and row 0 when looking down. Rows below a
/// slice show the floor cell hit by the row's ground ray, rows above show
/// the sky. Walls and floor are darkened by `1 / (1 + 0.15 d)`.
pub fn render(state: &EpisodeState) -> Observation {
    let n = VIEW_SIZE;
    let map = &state.map;
    let pose = state.pose;
    let mut obs = Observation::zeros(3, n, n);
    let (px, py) = (pose.x as f64 + 0.5, pose.y as f64 + 0.5);
    let (dx, dy) = pose.yaw.delta();
    let (dir_x, dir_y) = (dx as f64, dy as f64);
    // camera plane points to the viewer's right
    let (plane_x, plane_y) = (-dir_y, dir_x);
    let horizon = match pose.pitch {
        Pitch::Level => n as f64 / 2.0,
        Pitch::Down => 0.0,
    };
    let focal = n as f64;
    for col in 0..n {
        let cam = 2.0 * (col as f64 + 0.5) / n as f64 - 1.0;
        let (rx, ry) = (dir_x + plane_x * cam, dir_y + plane_y * cam);
        let (perp, hit) = cast(map, px, py, rx, ry);
        let slice_color = shade(solid_color(hit, state.indicator), perp);
        let half = focal / perp / 2.0;
        for row in 0..n {
            let yc = row as f64 + 0.5;
            let color = if yc >= horizon - half && yc < horizon + half {
                slice_color
            } else if yc < horizon {
                SKY
            } else {
                let d = (focal / 2.0) / (yc - horizon);
                let fx = (px + rx * d).floor() as i64;
                let fy = (py + ry * d).floor() as i64;
                shade(floor_color(map.cell_at(fx, fy)), d)
            };
            for (ch, &v) in color.iter().enumerate() {
                obs.set_pixel(ch, row, col, v);
            }
        }
    }
    obs
}

/// DDA walk from `(px, py)` along `(rx, ry)`; returns the perpendicular
/// distance to the first solid cell and that cell. The start cell is skipped.
fn cast(map: &super::MapSpec, px: f64, py: f64, rx: f64, ry: f64) -> (f64, Cell) {
    let mut cx = px.floor() as i64;
    let mut cy = py.floor() as i64;
    let ddx = if rx == 0.0 { f64::INFINITY } else { (1.0 / rx).abs() };
    let ddy = if ry == 0.0 { f64::INFINITY } else { (1.0 / ry).abs() };
    let (step_x, mut side_x) = if rx < 0.0 {
        (-1, (px - cx as f64) * ddx)
    } else {
        (1, (cx as f64 + 1.0 - px) * ddx)
    };
    let (step_y, mut side_y) = if ry < 0.0 {
        (-1, (py - cy as f64) * ddy)
    } else {
        (1, (cy as f64 + 1.0 - py) * ddy)
    };
    let limit = 2 * (map.width + map.height);
    for _ in 0..limit {
        let dist = if side_x < side_y {
            let d = side_x;
            side_x += ddx;
            cx += step_x;
            d
        } else {
            let d = side_y;
            side_y += ddy;
            cy += step_y;
            d
        };
        let cell = map.cell_at(cx, cy);
        if cell.is_solid() {
            return (dist.max(1e-6), cell);
        }
    }
    (f64::INFINITY, Cell::Wall)
}

/// Binary PPM (`P6`) encoding of a 3-channel observation.
pub fn to_ppm(obs: &Observation) -> Vec<u8> {
    let (h, w) = (obs.height(), obs.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&obs.rgb(y, x));
        }
    }
    out
}
