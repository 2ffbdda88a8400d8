//! First-person renderer: a column raycaster over the plan's wall faces
//! with floor/ceiling casting and camera-facing object billboards.
//!
//! Output is a 64x64 RGB observation (u8 storage, exposed as intensities
//! in [0,1]). Walls are drawn in their room's wall signature shaded by
//! 1/(1 + 0.15 * distance); floors and ceilings are flat room signatures;
//! objects are unshaded billboards whose silhouette depends on shape (square
//! for boxes, disc for balls, cross for keys) so they remain tellable apart
//! at a distance. Rendering is pure: identical inputs give identical bytes.

use serde::{Deserialize, Serialize};

use crate::floorplan::{FloorPlan, RoomId};
use crate::geom::Vec2;
use crate::lang::Shape;
use crate::simworld::{AgentPose, ObjectInstance};

/// Wall height in meters; the camera eye sits at half this height.
pub const WALL_HEIGHT: f64 = 2.0;
/// Height of object billboard centers above the floor, in meters. Chosen
/// near eye height so nearby objects stay in frame.
pub const OBJECT_CENTER_HEIGHT: f64 = 0.9;
/// World half-extent of an object billboard, in meters.
pub const OBJECT_HALF_EXTENT: f64 = 0.15;
/// Ceilings are the room wall signature scaled by this factor.
pub const CEILING_SCALE: f64 = 0.45;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RenderParams {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Wall shading falloff k in 1/(1 + k*d).
    pub shading_falloff: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self { width: 64, height: 64, fov_deg: 60.0, shading_falloff: 0.15 }
    }
}

/// One rendered frame: row-major, RGB-interleaved bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Observation {
    /// Intensity in [0,1] at pixel (x, y), channel c.
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * 3 + c] as f64 / 255.0
    }

    /// Channel-first (3, H, W) f64 copy in [0,1], the network input layout.
    pub fn to_chw(&self) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out[c * h * w + y * w + x] = self.get(x, y, c);
                }
            }
        }
        out
    }

    /// Raw bytes reordered to channel-first planes (the storage format the
    /// learning stack uses); dividing by 255 reproduces [`Self::to_chw`].
    pub fn to_chw_bytes(&self) -> Vec<u8> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0u8; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out[c * h * w + y * w + x] = self.pixels[(y * w + x) * 3 + c];
                }
            }
        }
        out
    }

    /// Mean intensity per channel.
    pub fn mean_rgb(&self) -> [f64; 3] {
        let mut sums = [0.0f64; 3];
        for (i, &b) in self.pixels.iter().enumerate() {
            sums[i % 3] += b as f64 / 255.0;
        }
        let n = (self.width * self.height) as f64;
        [sums[0] / n, sums[1] / n, sums[2] / n]
    }

    /// Binary PPM (P6) encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parse a binary PPM (P6) produced by `to_ppm`.
    pub fn from_ppm(bytes: &[u8]) -> Option<Observation> {
        let mut fields = Vec::new();
        let mut pos = 0usize;
        // Header: magic, width, height, maxval, then a single whitespace.
        while fields.len() < 4 && pos < bytes.len() {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(&bytes[start..pos]);
        }
        if fields.len() != 4 || fields[0] != b"P6" || fields[3] != b"255" {
            return None;
        }
        let width: usize = std::str::from_utf8(fields[1]).ok()?.parse().ok()?;
        let height: usize = std::str::from_utf8(fields[2]).ok()?.parse().ok()?;
        pos += 1; // single whitespace after maxval
        let need = width * height * 3;
        if bytes.len() < pos + need {
            return None;
        }
        Some(Observation { width, height, pixels: bytes[pos..pos + need].to_vec() })
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Render the agent's first-person view.
pub fn render(plan: &FloorPlan, pose: &AgentPose, objects: &[ObjectInstance], params: &RenderParams) -> Observation {
    render_with_visibility(plan, pose, objects, params).0
}

/// Render and additionally report, per object, how many pixels of it
/// survived occlusion into the final frame.
pub fn render_with_visibility(
    plan: &FloorPlan,
    pose: &AgentPose,
    objects: &[ObjectInstance],
    params: &RenderParams,
) -> (Observation, Vec<u32>) {
    let (w, h) = (params.width, params.height);
    let tan_h = (params.fov_deg.to_radians() * 0.5).tan();
    // Square pixels: vertical half-fov scaled by the aspect ratio.
    let tan_v = tan_h * (h as f64) / (w as f64);
    let eye = WALL_HEIGHT * 0.5;
    let theta = pose.heading();
    let fwd = Vec2::new(theta.cos(), theta.sin());
    let left = Vec2::new(-theta.sin(), theta.cos());
    let geometry = plan.geometry();
    let template = plan.template();

    let mut frame = vec![0.0f64; w * h * 3];
    let mut wall_depth = vec![f64::INFINITY; w];

    // Walls, floor, ceiling: one ray per column.
    #[allow(clippy::needless_range_loop)] // x is simultaneously math input and buffer index
    for x in 0..w {
        // u = +1 at the left edge of the screen, -1 at the right.
        let u = 1.0 - 2.0 * (x as f64 + 0.5) / (w as f64);
        let dir = fwd + left.scale(u * tan_h);

        // Closest wall-face intersection along the ray. The parameter t is
        // the perpendicular (forward) depth because dir has unit forward
        // component.
        let mut best_t = f64::INFINITY;
        let mut best_rgb = [0.0f64; 3];
        for face in &geometry.walls {
            let (a, b) = (face.seg.a, face.seg.b);
            if face.is_vertical() {
                if dir.x.abs() < 1e-12 {
                    continue;
                }
                let t = (a.x - pose.pos.x) / dir.x;
                if t <= 1e-9 || t >= best_t {
                    continue;
                }
                let yhit = pose.pos.y + dir.y * t;
                let (lo, hi) = (a.y.min(b.y), a.y.max(b.y));
                if yhit < lo || yhit > hi {
                    continue;
                }
                let room = if dir.x > 0.0 { face.neg_room } else { face.pos_room };
                if let Some(rgb) = room.and_then(|r| template.room(r)).map(|r| r.wall_rgb) {
                    best_t = t;
                    best_rgb = rgb;
                }
            } else {
                if dir.y.abs() < 1e-12 {
                    continue;
                }
                let t = (a.y - pose.pos.y) / dir.y;
                if t <= 1e-9 || t >= best_t {
                    continue;
                }
                let xhit = pose.pos.x + dir.x * t;
                let (lo, hi) = (a.x.min(b.x), a.x.max(b.x));
                if xhit < lo || xhit > hi {
                    continue;
                }
                let room = if dir.y > 0.0 { face.neg_room } else { face.pos_room };
                if let Some(rgb) = room.and_then(|r| template.room(r)).map(|r| r.wall_rgb) {
                    best_t = t;
                    best_rgb = rgb;
                }
            }
        }
        debug_assert!(best_t.is_finite(), "every column must hit a wall");
        wall_depth[x] = best_t;

        let euclid = best_t * dir.norm();
        let shade = 1.0 / (1.0 + params.shading_falloff * euclid);
        let half_px = if best_t.is_finite() { eye / (best_t * tan_v) * (h as f64 * 0.5) } else { 0.0 };
        let cy = h as f64 * 0.5;
        let (top, bot) = (cy - half_px, cy + half_px);

        for y in 0..h {
            let yc = y as f64 + 0.5;
            let px = (y * w + x) * 3;
            if yc >= top && yc <= bot {
                for (c, &v) in best_rgb.iter().enumerate() {
                    frame[px + c] = v * shade;
                }
            } else {
                // Floor or ceiling sample: project the row to the plane.
                let elev_tan = (cy - yc).abs() * tan_v / cy;
                let d_row = if elev_tan > 1e-12 { (eye / elev_tan).min(best_t) } else { best_t };
                let point = pose.pos + dir.scale(d_row);
                if let Some(room) = template.room_at(point).and_then(|r| template.room(r)) {
                    let rgb = if yc < top {
                        [
                            room.wall_rgb[0] * CEILING_SCALE,
                            room.wall_rgb[1] * CEILING_SCALE,
                            room.wall_rgb[2] * CEILING_SCALE,
                        ]
                    } else {
                        room.floor_rgb
                    };
                    frame[px..px + 3].copy_from_slice(&rgb);
                }
            }
        }
    }

    // Objects: camera-facing billboards, painter's order (far to near),
    // depth-tested per column against the walls. An owner buffer tracks
    // which object finally owns each pixel so visibility counts are exact
    // under occlusion.
    let mut owner = vec![-1i64; w * h];
    let mut order: Vec<usize> = (0..objects.len()).collect();
    let depths: Vec<f64> = objects.iter().map(|o| (o.pos - pose.pos).dot(fwd)).collect();
    order.sort_by(|&a, &b| depths[b].total_cmp(&depths[a]).then(a.cmp(&b)));

    for &oi in &order {
        let obj = &objects[oi];
        let rel = obj.pos - pose.pos;
        let depth = rel.dot(fwd);
        if depth < 0.1 {
            continue;
        }
        let lateral = rel.dot(left);
        let u_obj = lateral / (depth * tan_h);
        let cx_px = (1.0 - u_obj) * 0.5 * (w as f64) - 0.5;
        let px_per_m = (w as f64) / (2.0 * depth * tan_h);
        let r_px = OBJECT_HALF_EXTENT * px_per_m;
        if r_px < 1e-6 {
            continue;
        }
        let cy_px = (h as f64) * 0.5 + (eye - OBJECT_CENTER_HEIGHT) * px_per_m - 0.5;
        let rgb = obj.color.rgb();

        let x0 = ((cx_px - r_px).floor().max(0.0)) as usize;
        let x1 = ((cx_px + r_px).ceil().min(w as f64 - 1.0)) as usize;
        let y0 = ((cy_px - r_px).floor().max(0.0)) as usize;
        let y1 = ((cy_px + r_px).ceil().min(h as f64 - 1.0)) as usize;
        if (cx_px + r_px) < 0.0 || (cx_px - r_px) > w as f64 - 1.0 {
            continue;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                if depth >= wall_depth[x] {
                    continue;
                }
                let dx = (x as f64 - cx_px) / r_px;
                let dy = (y as f64 - cy_px) / r_px;
                let inside = match obj.shape {
                    Shape::Box => dx.abs() <= 1.0 && dy.abs() <= 1.0,
                    Shape::Ball => dx * dx + dy * dy <= 1.0,
                    Shape::Key => {
                        (dx.abs() <= 0.22 && dy.abs() <= 1.0) || (dy.abs() <= 0.22 && dx.abs() <= 1.0)
                    }
                };
                if inside {
                    let px = (y * w + x) * 3;
                    frame[px..px + 3].copy_from_slice(&rgb);
                    owner[y * w + x] = oi as i64;
                }
            }
        }
    }

    let mut vis = vec![0u32; objects.len()];
    for &o in &owner {
        if o >= 0 {
            vis[o as usize] += 1;
        }
    }

    let pixels: Vec<u8> = frame.iter().map(|&v| quantize(v)).collect();
    (Observation { width: w, height: h, pixels }, vis)
}

/// Canonical room view: the frame an agent would see standing at the
/// room's center facing heading 0, with no objects present.
pub fn render_room_center(plan: &FloorPlan, room: RoomId, params: &RenderParams) -> Observation {
    let rect = plan.template().room(room).expect("room in template").rect;
    let pose = AgentPose { pos: rect.center(), heading_idx: 0 };
    render(plan, &pose, &[], params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floorplan::{enumerate_floorplans, HouseTemplate};
    use crate::lang::Color;

    fn mini_all_doors() -> FloorPlan {
        enumerate_floorplans(&HouseTemplate::mini())
            .into_iter()
            .find(|p| p.doorway_mask() == 0b11111)
            .unwrap()
    }

    fn obj(color: Color, shape: Shape, x: f64, y: f64) -> ObjectInstance {
        ObjectInstance { color, shape, pos: Vec2::new(x, y), room: RoomId::Bedroom }
    }

    #[test]
    fn rendering_is_deterministic() {
        let plan = mini_all_doors();
        let pose = AgentPose { pos: Vec2::new(2.0, 4.0), heading_idx: 3 };
        let objects = vec![obj(Color::Red, Shape::Ball, 3.0, 4.5)];
        let a = render(&plan, &pose, &objects, &RenderParams::default());
        let b = render(&plan, &pose, &objects, &RenderParams::default());
        assert_eq!(a, b);
    }

    #[test]
    fn every_column_hits_a_wall() {
        let plan = mini_all_doors();
        for heading in 0..16u8 {
            let pose = AgentPose { pos: Vec2::new(6.0, 1.0), heading_idx: heading };
            let obs = render(&plan, &pose, &[], &RenderParams::default());
            for x in 0..obs.width {
                // The horizon row is always a wall pixel, never fallback black.
                let mid = obs.height / 2;
                let sum: f64 = (0..3).map(|c| obs.get(x, mid, c)).sum();
                assert!(sum > 0.0, "column {x} at heading {heading} has a black horizon");
            }
        }
    }

    /// A wall viewed head-on at a known distance has the room's wall
    /// signature shaded by 1/(1 + 0.15 d), up to quantization.
    #[test]
    fn wall_shading_matches_formula() {
        let plan = mini_all_doors();
        // Stand in the bedroom at (2, 4.5) facing north (+y, heading 4):
        // the north outer wall is at y=6, 1.5 m ahead.
        let pose = AgentPose { pos: Vec2::new(2.0, 4.5), heading_idx: 4 };
        let obs = render(&plan, &pose, &[], &RenderParams::default());
        let d = 1.5;
        let shade = 1.0 / (1.0 + 0.15 * d);
        let want = plan.template().room(RoomId::Bedroom).unwrap().wall_rgb;
        let x = obs.width / 2;
        let y = obs.height / 2;
        for (c, &w) in want.iter().enumerate() {
            let got = obs.get(x, y, c);
            assert!(
                (got - w * shade).abs() <= 1.5 / 255.0,
                "channel {c}: {got} vs {}",
                w * shade
            );
        }
    }

    /// Center-bottom pixels show the current room's floor signature,
    /// unshaded; center-top pixels show the scaled ceiling.
    #[test]
    fn floor_and_ceiling_are_room_signatures() {
        let plan = mini_all_doors();
        let pose = AgentPose { pos: Vec2::new(2.0, 4.0), heading_idx: 0 };
        let obs = render(&plan, &pose, &[], &RenderParams::default());
        let room = plan.template().room(RoomId::Bedroom).unwrap();
        let x = obs.width / 2;
        for c in 0..3 {
            let floor = obs.get(x, obs.height - 1, c);
            assert!((floor - room.floor_rgb[c]).abs() <= 1.5 / 255.0, "floor channel {c}");
            let ceil = obs.get(x, 0, c);
            assert!((ceil - room.wall_rgb[c] * CEILING_SCALE).abs() <= 1.5 / 255.0, "ceiling {c}");
        }
    }

    /// Shapes have distinct silhouettes: a box fills its bounding square,
    /// a ball is a disc (~pi/4 of it), a key is a thin cross (even less).
    #[test]
    fn silhouette_areas_are_ordered_by_shape()
    {
        let plan = mini_all_doors();
        let pose = AgentPose { pos: Vec2::new(2.0, 4.0), heading_idx: 0 };
        let params = RenderParams::default();
        let mut areas = std::collections::BTreeMap::new();
        for shape in Shape::ALL {
            let objects = vec![obj(Color::Red, shape, 3.5, 4.0)];
            let (_, vis) = render_with_visibility(&plan, &pose, &objects, &params);
            areas.insert(shape.word(), vis[0]);
        }
        assert!(areas["box"] > areas["ball"], "box {} vs ball {}", areas["box"], areas["ball"]);
        assert!(areas["ball"] > areas["key"], "ball {} vs key {}", areas["ball"], areas["key"]);
        // Disc-to-square ratio is near pi/4.
        let ratio = areas["ball"] as f64 / areas["box"] as f64;
        assert!((ratio - std::f64::consts::FRAC_PI_4).abs() < 0.12, "ratio {ratio}");
    }

    #[test]
    fn object_a_meter_ahead_is_plainly_visible() {
        let plan = mini_all_doors();
        let pose = AgentPose { pos: Vec2::new(2.0, 4.0), heading_idx: 0 };
        let objects = vec![obj(Color::Green, Shape::Ball, 3.0, 4.0)];
        let (obs, vis) = render_with_visibility(&plan, &pose, &objects, &RenderParams::default());
        assert!(vis[0] >= 20, "only {} pixels at 1 m", vis[0]);
        // The billboard is pure object color somewhere near screen center.
        let (w, h) = (obs.width, obs.height);
        let mut found = false;
        'search: for y in 0..h {
            for x in 0..w {
                let c = [obs.get(x, y, 0), obs.get(x, y, 1), obs.get(x, y, 2)];
                let want = Color::Green.rgb();
                if (0..3).all(|i| (c[i] - want[i]).abs() < 2.0 / 255.0) {
                    found = true;
                    break 'search;
                }
            }
        }
        assert!(found, "object color not present in frame");
    }

    #[test]
    fn walls_occlude_objects() {
        let plan = mini_all_doors();
        // Agent in bedroom looking east; object in the kitchen behind two
        // walls (bedroom/bathroom wall at x=4 outside the portal band).
        let pose = AgentPose { pos: Vec2::new(1.0, 5.5), heading_idx: 0 };
        let objects = vec![obj(Color::Red, Shape::Box, 11.0, 5.5)];
        let (_, vis) = render_with_visibility(&plan, &pose, &objects, &RenderParams::default());
        assert_eq!(vis[0], 0, "object behind walls must be invisible");
    }

    #[test]
    fn nearer_object_occludes_farther_one() {
        let plan = mini_all_doors();
        let pose = AgentPose { pos: Vec2::new(2.0, 4.0), heading_idx: 0 };
        let far = obj(Color::Red, Shape::Box, 3.6, 4.0);
        let near = obj(Color::Blue, Shape::Box, 2.8, 4.0);
        let (_, vis_alone) = render_with_visibility(&plan, &pose, std::slice::from_ref(&far), &RenderParams::default());
        let (_, vis_both) = render_with_visibility(&plan, &pose, &[far, near], &RenderParams::default());
        assert!(vis_both[0] < vis_alone[0], "occluded: {} vs alone {}", vis_both[0], vis_alone[0]);
        assert!(vis_both[1] > 0);
    }

    #[test]
    fn object_behind_camera_is_invisible() {
        let plan = mini_all_doors();
        let pose = AgentPose { pos: Vec2::new(2.0, 4.0), heading_idx: 0 };
        let objects = vec![obj(Color::Red, Shape::Ball, 1.0, 4.0)];
        let (_, vis) = render_with_visibility(&plan, &pose, &objects, &RenderParams::default());
        assert_eq!(vis[0], 0);
    }

    /// Mean frame colors at room centers are pairwise separated, so rooms
    /// are distinguishable from a single glance.
    #[test]
    fn room_center_views_are_separated() {
        for tpl in [HouseTemplate::standard(), HouseTemplate::mini()] {
            let plans = enumerate_floorplans(&tpl);
            let all_on = plans.last().unwrap();
            let params = RenderParams::default();
            let ids = tpl.room_ids();
            let means: Vec<[f64; 3]> = ids
                .iter()
                .map(|&r| render_room_center(all_on, r, &params).mean_rgb())
                .collect();
            for i in 0..means.len() {
                for j in (i + 1)..means.len() {
                    let l1: f64 = (0..3).map(|c| (means[i][c] - means[j][c]).abs()).sum();
                    assert!(
                        l1 >= 0.1,
                        "{}: rooms {} and {} mean views L1 {l1:.3} < 0.1",
                        tpl.name,
                        ids[i].name(),
                        ids[j].name()
                    );
                }
            }
        }
    }

    #[test]
    fn ppm_round_trips() {
        let plan = mini_all_doors();
        let pose = AgentPose { pos: Vec2::new(6.0, 1.0), heading_idx: 2 };
        let obs = render(&plan, &pose, &[], &RenderParams::default());
        let ppm = obs.to_ppm();
        let back = Observation::from_ppm(&ppm).unwrap();
        assert_eq!(obs, back);
    }
}
