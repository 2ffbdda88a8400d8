//! House templates and procedural floorplan enumeration.
//!
//! A house template fixes the room rectangles (which tile the bounding box
//! exactly) and a set of candidate doorway positions. A floorplan is a
//! subset of those doorways under which every room is reachable; plans are
//! enumerated in ascending doorway-bitmask order and identified by their
//! position in that enumeration, so plan ids are stable across runs.

use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::FloorplanError;
use crate::geom::{Rect, Segment, Vec2};

/// Width of every doorway opening, in meters.
pub const DOORWAY_WIDTH: f64 = 1.0;
/// Occupancy-grid resolution, in meters per cell.
pub const GRID_RES: f64 = 0.05;
/// Half-thickness of a wall slab for grid occupancy, in meters.
pub const WALL_HALF_THICKNESS: f64 = 0.05;

/// Rooms a house can contain. The corridor is a room like any other for
/// navigation purposes but is never an instruction or enhancement target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomId {
    Garage,
    Storage,
    Bedroom,
    Bathroom,
    LivingRoom,
    DiningRoom,
    Kitchen,
    Corridor,
}

impl RoomId {
    pub const ALL: [RoomId; 8] = [
        RoomId::Garage,
        RoomId::Storage,
        RoomId::Bedroom,
        RoomId::Bathroom,
        RoomId::LivingRoom,
        RoomId::DiningRoom,
        RoomId::Kitchen,
        RoomId::Corridor,
    ];

    /// The navigable (non-corridor) rooms, in ordinal order.
    pub const NAV: [RoomId; 7] = [
        RoomId::Garage,
        RoomId::Storage,
        RoomId::Bedroom,
        RoomId::Bathroom,
        RoomId::LivingRoom,
        RoomId::DiningRoom,
        RoomId::Kitchen,
    ];

    pub fn ord(self) -> usize {
        RoomId::ALL.iter().position(|&r| r == self).expect("room in ALL")
    }

    pub fn from_ord(ord: usize) -> Option<RoomId> {
        RoomId::ALL.get(ord).copied()
    }

    /// Canonical snake_case name, as used in files and reports.
    pub fn name(self) -> &'static str {
        match self {
            RoomId::Garage => "garage",
            RoomId::Storage => "storage",
            RoomId::Bedroom => "bedroom",
            RoomId::Bathroom => "bathroom",
            RoomId::LivingRoom => "living_room",
            RoomId::DiningRoom => "dining_room",
            RoomId::Kitchen => "kitchen",
            RoomId::Corridor => "corridor",
        }
    }

    /// Words used when the room is spoken in an instruction.
    pub fn words(self) -> &'static [&'static str] {
        match self {
            RoomId::Garage => &["garage"],
            RoomId::Storage => &["storage"],
            RoomId::Bedroom => &["bedroom"],
            RoomId::Bathroom => &["bathroom"],
            RoomId::LivingRoom => &["living", "room"],
            RoomId::DiningRoom => &["dining", "room"],
            RoomId::Kitchen => &["kitchen"],
            RoomId::Corridor => &["corridor"],
        }
    }

    pub fn from_name(name: &str) -> Option<RoomId> {
        RoomId::ALL.iter().copied().find(|r| r.name() == name)
    }

    pub fn is_corridor(self) -> bool {
        self == RoomId::Corridor
    }
}

/// One room of a template: its rectangle and its color signature. Wall
/// signatures are pairwise distinct (channel-wise L1 distance at least 0.3)
/// so rooms are visually tellable-apart from inside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomTemplate {
    pub id: RoomId,
    pub rect: Rect,
    pub wall_rgb: [f64; 3],
    pub floor_rgb: [f64; 3],
}

/// A potential doorway between two rooms: the 1 m portal segment centered
/// on the rooms' shared edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateDoorway {
    pub rooms: (RoomId, RoomId),
    pub portal: Segment,
}

impl CandidateDoorway {
    pub fn connects(&self, a: RoomId, b: RoomId) -> bool {
        (self.rooms.0 == a && self.rooms.1 == b) || (self.rooms.0 == b && self.rooms.1 == a)
    }

    pub fn label(&self) -> String {
        format!("{}|{}", self.rooms.0.name(), self.rooms.1.name())
    }
}

/// A fixed house layout: rooms tiling a bounding box plus candidate
/// doorways. Floorplans are derived from a template by enabling a subset
/// of the candidates.
#[derive(Debug, Clone)]
pub struct HouseTemplate {
    pub name: &'static str,
    pub bounds: Rect,
    pub rooms: Vec<RoomTemplate>,
    pub candidates: Vec<CandidateDoorway>,
}

fn room(id: RoomId, rect: Rect, wall: [f64; 3], floor: [f64; 3]) -> RoomTemplate {
    RoomTemplate { id, rect, wall_rgb: wall, floor_rgb: floor }
}

impl HouseTemplate {
    /// The full seven-room house: four rooms along the north wall, three
    /// along the south wall, and a corridor spanning the middle.
    ///
    /// ```text
    ///   y=10 +--------+--------+--------+--------+
    ///        | garage | storage| bedroom| bath   |
    ///   y=6  +--------+--------+--------+--------+
    ///        |              corridor             |
    ///   y=4  +----------------+--------+---------+
    ///        |   living_room  | dining | kitchen |
    ///   y=0  +----------------+--------+---------+
    ///        x=0      x=4     x=8      x=12      x=16
    /// ```
    pub fn standard() -> Arc<HouseTemplate> {
        static TPL: OnceLock<Arc<HouseTemplate>> = OnceLock::new();
        TPL.get_or_init(|| {
            let rooms = vec![
                room(RoomId::Garage, Rect::new(0.0, 6.0, 4.0, 10.0), [0.55, 0.35, 0.20], [0.45, 0.30, 0.20]),
                room(RoomId::Storage, Rect::new(4.0, 6.0, 8.0, 10.0), [0.35, 0.55, 0.65], [0.30, 0.45, 0.55]),
                room(RoomId::Bedroom, Rect::new(8.0, 6.0, 12.0, 10.0), [0.65, 0.45, 0.65], [0.50, 0.35, 0.55]),
                room(RoomId::Bathroom, Rect::new(12.0, 6.0, 16.0, 10.0), [0.40, 0.72, 0.52], [0.35, 0.55, 0.45]),
                room(RoomId::LivingRoom, Rect::new(0.0, 0.0, 8.0, 4.0), [0.75, 0.65, 0.35], [0.60, 0.50, 0.30]),
                room(RoomId::DiningRoom, Rect::new(8.0, 0.0, 12.0, 4.0), [0.70, 0.40, 0.40], [0.55, 0.35, 0.35]),
                room(RoomId::Kitchen, Rect::new(12.0, 0.0, 16.0, 4.0), [0.45, 0.42, 0.78], [0.40, 0.40, 0.60]),
                room(RoomId::Corridor, Rect::new(0.0, 4.0, 16.0, 6.0), [0.80, 0.80, 0.78], [0.62, 0.62, 0.60]),
            ];
            let pairs = [
                (RoomId::Garage, RoomId::Corridor),
                (RoomId::Storage, RoomId::Corridor),
                (RoomId::Bedroom, RoomId::Corridor),
                (RoomId::Bathroom, RoomId::Corridor),
                (RoomId::LivingRoom, RoomId::Corridor),
                (RoomId::DiningRoom, RoomId::Corridor),
                (RoomId::Kitchen, RoomId::Corridor),
                (RoomId::Garage, RoomId::Storage),
                (RoomId::Bedroom, RoomId::Bathroom),
                (RoomId::LivingRoom, RoomId::DiningRoom),
                (RoomId::DiningRoom, RoomId::Kitchen),
            ];
            Arc::new(Self::assemble("standard", Rect::new(0.0, 0.0, 16.0, 10.0), rooms, &pairs))
        })
        .clone()
    }

    /// A three-room house for desk-scale experiments: bedroom, bathroom and
    /// kitchen along the north wall above a corridor.
    ///
    /// ```text
    ///   y=6  +--------+--------+--------+
    ///        | bedroom| bath   | kitchen|
    ///   y=2  +--------+--------+--------+
    ///        |          corridor        |
    ///   y=0  +--------------------------+
    ///        x=0      x=4     x=8      x=12
    /// ```
    pub fn mini() -> Arc<HouseTemplate> {
        static TPL: OnceLock<Arc<HouseTemplate>> = OnceLock::new();
        TPL.get_or_init(|| {
            let rooms = vec![
                room(RoomId::Bedroom, Rect::new(0.0, 2.0, 4.0, 6.0), [0.65, 0.45, 0.65], [0.50, 0.35, 0.55]),
                room(RoomId::Bathroom, Rect::new(4.0, 2.0, 8.0, 6.0), [0.40, 0.72, 0.52], [0.35, 0.55, 0.45]),
                room(RoomId::Kitchen, Rect::new(8.0, 2.0, 12.0, 6.0), [0.45, 0.42, 0.78], [0.40, 0.40, 0.60]),
                room(RoomId::Corridor, Rect::new(0.0, 0.0, 12.0, 2.0), [0.80, 0.80, 0.78], [0.62, 0.62, 0.60]),
            ];
            let pairs = [
                (RoomId::Bedroom, RoomId::Corridor),
                (RoomId::Bathroom, RoomId::Corridor),
                (RoomId::Kitchen, RoomId::Corridor),
                (RoomId::Bedroom, RoomId::Bathroom),
                (RoomId::Bathroom, RoomId::Kitchen),
            ];
            Arc::new(Self::assemble("mini", Rect::new(0.0, 0.0, 12.0, 6.0), rooms, &pairs))
        })
        .clone()
    }

    pub fn by_name(name: &str) -> Option<Arc<HouseTemplate>> {
        match name {
            "standard" => Some(Self::standard()),
            "mini" => Some(Self::mini()),
            _ => None,
        }
    }

    fn assemble(
        name: &'static str,
        bounds: Rect,
        rooms: Vec<RoomTemplate>,
        pairs: &[(RoomId, RoomId)],
    ) -> HouseTemplate {
        let mut candidates = Vec::new();
        for &(a, b) in pairs {
            let ra = rooms.iter().find(|r| r.id == a).expect("room a").rect;
            let rb = rooms.iter().find(|r| r.id == b).expect("room b").rect;
            let edge = shared_edge(&ra, &rb).expect("candidate rooms must share an edge");
            let portal = centered_portal(&edge, DOORWAY_WIDTH);
            candidates.push(CandidateDoorway { rooms: (a, b), portal });
        }
        HouseTemplate { name, bounds, rooms, candidates }
    }

    pub fn room(&self, id: RoomId) -> Option<&RoomTemplate> {
        self.rooms.iter().find(|r| r.id == id)
    }

    /// Room containing a point; rooms tile the bounds, so any interior
    /// point maps to exactly one room.
    pub fn room_at(&self, p: Vec2) -> Option<RoomId> {
        self.rooms.iter().find(|r| r.rect.contains(p)).map(|r| r.id)
    }

    /// Non-corridor rooms present in this template, in ordinal order.
    pub fn nav_rooms(&self) -> Vec<RoomId> {
        RoomId::NAV.iter().copied().filter(|&id| self.room(id).is_some()).collect()
    }

    pub fn room_ids(&self) -> Vec<RoomId> {
        RoomId::ALL.iter().copied().filter(|&id| self.room(id).is_some()).collect()
    }
}

/// Shared boundary segment of two touching rectangles, if any.
fn shared_edge(a: &Rect, b: &Rect) -> Option<Segment> {
    const EPS: f64 = 1e-9;
    // Vertical interface: a's east against b's west or vice versa.
    for (left, right) in [(a, b), (b, a)] {
        if (left.max.x - right.min.x).abs() < EPS {
            let lo = left.min.y.max(right.min.y);
            let hi = left.max.y.min(right.max.y);
            if hi - lo > EPS {
                let x = left.max.x;
                return Some(Segment::new(Vec2::new(x, lo), Vec2::new(x, hi)));
            }
        }
        if (left.max.y - right.min.y).abs() < EPS {
            let lo = left.min.x.max(right.min.x);
            let hi = left.max.x.min(right.max.x);
            if hi - lo > EPS {
                let y = left.max.y;
                return Some(Segment::new(Vec2::new(lo, y), Vec2::new(hi, y)));
            }
        }
    }
    None
}

/// A portal of the given width centered on an edge segment.
fn centered_portal(edge: &Segment, width: f64) -> Segment {
    let mid = Vec2::new((edge.a.x + edge.b.x) * 0.5, (edge.a.y + edge.b.y) * 0.5);
    let dir = edge.b - edge.a;
    let len = dir.norm();
    let half = (width * 0.5).min(len * 0.5);
    let unit = dir.scale(1.0 / len);
    Segment::new(mid - unit.scale(half), mid + unit.scale(half))
}

/// One wall face: an axis-aligned segment annotated with the room on each
/// side (`None` means outside the house). `pos_room` lies on the side with
/// the greater coordinate along the wall's normal axis.
#[derive(Debug, Clone)]
pub struct WallFace {
    pub seg: Segment,
    pub neg_room: Option<RoomId>,
    pub pos_room: Option<RoomId>,
}

impl WallFace {
    pub fn is_vertical(&self) -> bool {
        (self.seg.a.x - self.seg.b.x).abs() < 1e-9
    }
}

/// Occupancy-grid coordinate frame.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub origin: Vec2,
    pub res: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.res;
        let fy = (p.y - self.origin.y) / self.res;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        Some((ix, iy))
    }

    pub fn center(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (ix as f64 + 0.5) * self.res,
            self.origin.y + (iy as f64 + 0.5) * self.res,
        )
    }

    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }
}

/// Immutable per-plan geometry derived from the template and the enabled
/// doorways: wall faces, grid occupancy (walls fattened to 0.1 m slabs),
/// and a per-cell room lookup. Built once per plan and shared read-only.
#[derive(Debug)]
pub struct PlanGeometry {
    pub grid: GridSpec,
    pub walls: Vec<WallFace>,
    /// true = blocked (cell center within the wall slab).
    pub blocked: Vec<bool>,
    /// Room ordinal per cell (255 where outside all rooms, which does not
    /// occur for in-bounds cells).
    pub room_grid: Vec<u8>,
    /// Indices of unblocked cells, row-major order (spawn sampling).
    pub walkable: Vec<u32>,
}

impl PlanGeometry {
    fn build(template: &HouseTemplate, mask: u32) -> PlanGeometry {
        let walls = build_walls(template, mask);
        let bounds = template.bounds;
        let nx = (bounds.width() / GRID_RES).round() as usize;
        let ny = (bounds.height() / GRID_RES).round() as usize;
        let grid = GridSpec { origin: bounds.min, res: GRID_RES, nx, ny };

        let mut blocked = vec![false; grid.n_cells()];
        for wall in &walls {
            // Only cells near the wall's bounding box can be in its slab.
            let pad = WALL_HALF_THICKNESS + GRID_RES;
            let x0 = wall.seg.a.x.min(wall.seg.b.x) - pad;
            let x1 = wall.seg.a.x.max(wall.seg.b.x) + pad;
            let y0 = wall.seg.a.y.min(wall.seg.b.y) - pad;
            let y1 = wall.seg.a.y.max(wall.seg.b.y) + pad;
            let ix0 = (((x0 - grid.origin.x) / GRID_RES).floor().max(0.0)) as usize;
            let iy0 = (((y0 - grid.origin.y) / GRID_RES).floor().max(0.0)) as usize;
            let ix1 = ((((x1 - grid.origin.x) / GRID_RES).ceil()) as usize).min(nx.saturating_sub(1));
            let iy1 = ((((y1 - grid.origin.y) / GRID_RES).ceil()) as usize).min(ny.saturating_sub(1));
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    if !blocked[grid.idx(ix, iy)]
                        && wall.seg.point_distance(grid.center(ix, iy)) <= WALL_HALF_THICKNESS + 1e-9
                    {
                        blocked[grid.idx(ix, iy)] = true;
                    }
                }
            }
        }

        let mut room_grid = vec![255u8; grid.n_cells()];
        let mut walkable = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let c = grid.center(ix, iy);
                if let Some(id) = template.room_at(c) {
                    room_grid[grid.idx(ix, iy)] = id.ord() as u8;
                }
                if !blocked[grid.idx(ix, iy)] {
                    walkable.push(grid.idx(ix, iy) as u32);
                }
            }
        }
        PlanGeometry { grid, walls, blocked, room_grid, walkable }
    }

    pub fn room_at_cell(&self, ix: usize, iy: usize) -> Option<RoomId> {
        RoomId::from_ord(self.room_grid[self.grid.idx(ix, iy)] as usize)
    }
}

/// Wall faces for a given doorway mask: every room-room interface (with a
/// 1 m gap where a doorway is enabled) plus the outer boundary.
fn build_walls(template: &HouseTemplate, mask: u32) -> Vec<WallFace> {
    const EPS: f64 = 1e-9;
    let mut walls = Vec::new();
    let rooms = &template.rooms;

    let enabled = |a: RoomId, b: RoomId| -> Option<&CandidateDoorway> {
        template
            .candidates
            .iter()
            .enumerate()
            .find(|(i, c)| c.connects(a, b) && (mask >> i) & 1 == 1)
            .map(|(_, c)| c)
    };

    // Interior interfaces.
    for i in 0..rooms.len() {
        for j in (i + 1)..rooms.len() {
            let (ra, rb) = (&rooms[i], &rooms[j]);
            let Some(edge) = shared_edge(&ra.rect, &rb.rect) else { continue };
            let vertical = (edge.a.x - edge.b.x).abs() < EPS;
            let (neg, pos) = if vertical {
                if (ra.rect.max.x - edge.a.x).abs() < EPS { (ra.id, rb.id) } else { (rb.id, ra.id) }
            } else if (ra.rect.max.y - edge.a.y).abs() < EPS {
                (ra.id, rb.id)
            } else {
                (rb.id, ra.id)
            };
            let pieces: Vec<Segment> = match enabled(ra.id, rb.id) {
                Some(door) => split_at_portal(&edge, &door.portal),
                None => vec![edge],
            };
            for seg in pieces {
                walls.push(WallFace { seg, neg_room: Some(neg), pos_room: Some(pos) });
            }
        }
    }

    // Outer boundary, one face per room edge lying on the bounds.
    let b = template.bounds;
    for r in rooms {
        let rc = r.rect;
        if (rc.min.x - b.min.x).abs() < EPS {
            walls.push(WallFace {
                seg: Segment::new(Vec2::new(rc.min.x, rc.min.y), Vec2::new(rc.min.x, rc.max.y)),
                neg_room: None,
                pos_room: Some(r.id),
            });
        }
        if (rc.max.x - b.max.x).abs() < EPS {
            walls.push(WallFace {
                seg: Segment::new(Vec2::new(rc.max.x, rc.min.y), Vec2::new(rc.max.x, rc.max.y)),
                neg_room: Some(r.id),
                pos_room: None,
            });
        }
        if (rc.min.y - b.min.y).abs() < EPS {
            walls.push(WallFace {
                seg: Segment::new(Vec2::new(rc.min.x, rc.min.y), Vec2::new(rc.max.x, rc.min.y)),
                neg_room: None,
                pos_room: Some(r.id),
            });
        }
        if (rc.max.y - b.max.y).abs() < EPS {
            walls.push(WallFace {
                seg: Segment::new(Vec2::new(rc.min.x, rc.max.y), Vec2::new(rc.max.x, rc.max.y)),
                neg_room: Some(r.id),
                pos_room: None,
            });
        }
    }
    walls
}

/// Split an edge into the wall pieces on either side of a portal.
fn split_at_portal(edge: &Segment, portal: &Segment) -> Vec<Segment> {
    const EPS: f64 = 1e-9;
    let dir = edge.b - edge.a;
    let len = dir.norm();
    let unit = dir.scale(1.0 / len);
    let t0 = (portal.a - edge.a).dot(unit).clamp(0.0, len);
    let t1 = (portal.b - edge.a).dot(unit).clamp(0.0, len);
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    let mut pieces = Vec::new();
    if lo > EPS {
        pieces.push(Segment::new(edge.a, edge.a + unit.scale(lo)));
    }
    if hi < len - EPS {
        pieces.push(Segment::new(edge.a + unit.scale(hi), edge.b));
    }
    pieces
}

/// A realized floorplan: a template plus an enabled-doorway mask under
/// which all rooms are mutually reachable.
#[derive(Debug, Clone)]
pub struct FloorPlan {
    plan_id: u32,
    doorway_mask: u32,
    template: Arc<HouseTemplate>,
    /// Room-graph adjacency: bit `j` of `adj[i]` is set when rooms with
    /// ordinals i and j share an enabled doorway.
    adj: [u8; 8],
    geometry: OnceLock<Arc<PlanGeometry>>,
}

impl FloorPlan {
    pub fn new(template: Arc<HouseTemplate>, plan_id: u32, doorway_mask: u32) -> Result<FloorPlan, FloorplanError> {
        let adj = adjacency_of(&template, doorway_mask);
        if !is_connected(&template, &adj) {
            return Err(FloorplanError::Disconnected { plan_id });
        }
        Ok(FloorPlan { plan_id, doorway_mask, template, adj, geometry: OnceLock::new() })
    }

    pub fn plan_id(&self) -> u32 {
        self.plan_id
    }

    pub fn doorway_mask(&self) -> u32 {
        self.doorway_mask
    }

    pub fn template(&self) -> &Arc<HouseTemplate> {
        &self.template
    }

    pub fn doorways(&self) -> Vec<&CandidateDoorway> {
        self.template
            .candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| (self.doorway_mask >> i) & 1 == 1)
            .map(|(_, c)| c)
            .collect()
    }

    /// Direct adjacency in the room graph (an enabled doorway joins them).
    pub fn adjacent(&self, a: RoomId, b: RoomId) -> bool {
        a != b && (self.adj[a.ord()] >> b.ord()) & 1 == 1
    }

    pub fn neighbors(&self, r: RoomId) -> Vec<RoomId> {
        RoomId::ALL.iter().copied().filter(|&o| self.adjacent(r, o)).collect()
    }

    /// Lazily built, cached geometry (walls, occupancy, room lookup).
    pub fn geometry(&self) -> &Arc<PlanGeometry> {
        self.geometry.get_or_init(|| Arc::new(PlanGeometry::build(&self.template, self.doorway_mask)))
    }
}

fn adjacency_of(template: &HouseTemplate, mask: u32) -> [u8; 8] {
    let mut adj = [0u8; 8];
    for (i, c) in template.candidates.iter().enumerate() {
        if (mask >> i) & 1 == 1 {
            let (a, b) = (c.rooms.0.ord(), c.rooms.1.ord());
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
        }
    }
    adj
}

fn is_connected(template: &HouseTemplate, adj: &[u8; 8]) -> bool {
    let present: Vec<usize> = template.rooms.iter().map(|r| r.id.ord()).collect();
    if present.is_empty() {
        return false;
    }
    let mut seen = [false; 8];
    let mut stack = vec![present[0]];
    seen[present[0]] = true;
    while let Some(i) = stack.pop() {
        #[allow(clippy::needless_range_loop)] // j is a bit position
        for j in 0..8 {
            if (adj[i] >> j) & 1 == 1 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    present.iter().all(|&i| seen[i])
}

/// Enumerate every connected floorplan of a template, in ascending
/// doorway-bitmask order. The plan id is the index in this enumeration.
pub fn enumerate_floorplans(template: &Arc<HouseTemplate>) -> Vec<FloorPlan> {
    let n = template.candidates.len();
    assert!(n <= 31, "doorway mask stored in u32");
    let mut plans = Vec::new();
    for mask in 0..(1u32 << n) {
        let adj = adjacency_of(template, mask);
        if is_connected(template, &adj) {
            let plan_id = plans.len() as u32;
            plans.push(FloorPlan {
                plan_id,
                doorway_mask: mask,
                template: Arc::clone(template),
                adj,
                geometry: OnceLock::new(),
            });
        }
    }
    plans
}

/// Train/holdout plan-id split. The plan ids are shuffled by the seed and
/// the last `holdout_n` become the holdout set; both halves are returned
/// in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSplit {
    pub train: Vec<u32>,
    pub holdout: Vec<u32>,
}

/// Default holdout size: 30 when at least 60 plans exist, otherwise 23%
/// of the total (rounded up).
pub fn default_holdout_n(total: usize) -> usize {
    if total >= 60 {
        30
    } else {
        ((total as f64) * 0.23).ceil() as usize
    }
}

pub fn split_plans(plans: &[FloorPlan], holdout_n: usize, seed: u64) -> Result<PlanSplit, FloorplanError> {
    let total = plans.len();
    if holdout_n == 0 || holdout_n >= total {
        return Err(FloorplanError::BadSplit { holdout: holdout_n, total });
    }
    let mut ids: Vec<u32> = plans.iter().map(|p| p.plan_id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut holdout: Vec<u32> = ids.split_off(total - holdout_n);
    let mut train = ids;
    train.sort_unstable();
    holdout.sort_unstable();
    Ok(PlanSplit { train, holdout })
}

/// Shortest room-graph path between two rooms, inclusive of both ends.
/// Ties are broken toward the neighbor with the smallest room ordinal, so
/// the result is unique and deterministic.
pub fn shortest_room_path(plan: &FloorPlan, from: RoomId, to: RoomId) -> Result<Vec<RoomId>, FloorplanError> {
    if plan.template.room(from).is_none() {
        return Err(FloorplanError::UnknownRoom(from.name().to_string()));
    }
    if plan.template.room(to).is_none() {
        return Err(FloorplanError::UnknownRoom(to.name().to_string()));
    }
    if from == to {
        return Ok(vec![from]);
    }
    // BFS distances from the destination, then greedy descent from `from`.
    let mut dist = [u32::MAX; 8];
    dist[to.ord()] = 0;
    let mut queue = std::collections::VecDeque::from([to.ord()]);
    while let Some(i) = queue.pop_front() {
        for j in 0..8 {
            if (plan.adj[i] >> j) & 1 == 1 && dist[j] == u32::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    if dist[from.ord()] == u32::MAX {
        return Err(FloorplanError::NoRoomPath { from: from.name().to_string(), to: to.name().to_string() });
    }
    let mut path = vec![from];
    let mut cur = from.ord();
    while cur != to.ord() {
        let next = (0..8)
            .filter(|&j| (plan.adj[cur] >> j) & 1 == 1 && dist[j] == dist[cur] - 1)
            .min()
            .expect("descent step exists on a shortest path");
        path.push(RoomId::from_ord(next).expect("valid ordinal"));
        cur = next;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rooms_tile_bounds_without_overlap() {
        for tpl in [HouseTemplate::standard(), HouseTemplate::mini()] {
            let area: f64 = tpl.rooms.iter().map(|r| r.rect.width() * r.rect.height()).sum();
            let bounds_area = tpl.bounds.width() * tpl.bounds.height();
            assert!((area - bounds_area).abs() < 1e-9, "{}: area {area} vs {bounds_area}", tpl.name);
            // Pairwise interior-disjoint: sample centers of a fine lattice.
            for iy in 0..20 {
                for ix in 0..32 {
                    let p = Vec2::new(
                        tpl.bounds.min.x + (ix as f64 + 0.5) / 32.0 * tpl.bounds.width(),
                        tpl.bounds.min.y + (iy as f64 + 0.5) / 20.0 * tpl.bounds.height(),
                    );
                    let n = tpl.rooms.iter().filter(|r| r.rect.contains(p)).count();
                    assert_eq!(n, 1, "{}: point ({}, {}) in {n} rooms", tpl.name, p.x, p.y);
                }
            }
        }
    }

    #[test]
    fn wall_signatures_pairwise_distinct() {
        for tpl in [HouseTemplate::standard(), HouseTemplate::mini()] {
            for i in 0..tpl.rooms.len() {
                for j in (i + 1)..tpl.rooms.len() {
                    let a = tpl.rooms[i].wall_rgb;
                    let b = tpl.rooms[j].wall_rgb;
                    let l1: f64 = (0..3).map(|c| (a[c] - b[c]).abs()).sum();
                    assert!(
                        l1 >= 0.3,
                        "{}: rooms {} and {} wall L1 {l1:.3} < 0.3",
                        tpl.name,
                        tpl.rooms[i].id.name(),
                        tpl.rooms[j].id.name()
                    );
                }
            }
        }
    }

    #[test]
    fn candidate_portals_lie_on_shared_edges() {
        for tpl in [HouseTemplate::standard(), HouseTemplate::mini()] {
            for c in &tpl.candidates {
                let ra = tpl.room(c.rooms.0).unwrap().rect;
                let rb = tpl.room(c.rooms.1).unwrap().rect;
                let edge = shared_edge(&ra, &rb).expect("candidates share an edge");
                assert!(edge.point_distance(c.portal.a) < 1e-9);
                assert!(edge.point_distance(c.portal.b) < 1e-9);
                assert!((c.portal.len() - DOORWAY_WIDTH).abs() < 1e-9);
            }
        }
    }

    /// The plan count factorizes over independent template sections. For the
    /// standard house the garage–storage and bedroom–bathroom pairs each
    /// admit 4 connected doorway configurations (both spokes; one spoke plus
    /// the pair door, twice; all three), and the living-dining-kitchen chain
    /// with three spokes admits 14 (8 spanning trees, 5 four-edge subgraphs,
    /// 1 five-edge subgraph), giving 4 * 4 * 14 = 224. The mini house is
    /// exactly one chain section: 14.
    #[test]
    fn enumeration_counts_match_hand_derivation() {
        assert_eq!(enumerate_floorplans(&HouseTemplate::standard()).len(), 224);
        assert_eq!(enumerate_floorplans(&HouseTemplate::mini()).len(), 14);
    }

    #[test]
    fn enumeration_is_ascending_and_connected_by_independent_check() {
        for tpl in [HouseTemplate::standard(), HouseTemplate::mini()] {
            let plans = enumerate_floorplans(&tpl);
            let mut last_mask = None;
            for (i, p) in plans.iter().enumerate() {
                assert_eq!(p.plan_id() as usize, i);
                if let Some(m) = last_mask {
                    assert!(p.doorway_mask() > m, "masks ascend");
                }
                last_mask = Some(p.doorway_mask());
                // Independent connectivity check: union-find over doorways.
                let mut parent: Vec<usize> = (0..8).collect();
                fn find(p: &mut Vec<usize>, i: usize) -> usize {
                    if p[i] != i {
                        let r = find(p, p[i]);
                        p[i] = r;
                    }
                    p[i]
                }
                for (k, c) in tpl.candidates.iter().enumerate() {
                    if (p.doorway_mask() >> k) & 1 == 1 {
                        let (a, b) = (find(&mut parent, c.rooms.0.ord()), find(&mut parent, c.rooms.1.ord()));
                        parent[a] = b;
                    }
                }
                let ords: Vec<usize> = tpl.rooms.iter().map(|r| r.id.ord()).collect();
                let root = find(&mut parent, ords[0]);
                assert!(ords.iter().all(|&o| find(&mut parent, o) == root), "plan {} connected", i);
            }
        }
    }

    #[test]
    fn disconnected_mask_is_rejected() {
        let tpl = HouseTemplate::mini();
        // Only the bedroom spoke: bathroom and kitchen unreachable.
        let err = FloorPlan::new(tpl, 7, 0b00001).unwrap_err();
        assert!(matches!(err, FloorplanError::Disconnected { plan_id: 7 }));
    }

    /// Total wall length is the outer perimeter plus all interior interface
    /// lengths minus one doorway width per enabled doorway.
    #[test]
    fn wall_lengths_account_for_doorways() {
        let tpl = HouseTemplate::standard();
        let all_on = (1u32 << tpl.candidates.len()) - 1;
        let plan = FloorPlan::new(Arc::clone(&tpl), 0, all_on).unwrap();
        let total: f64 = plan.geometry().walls.iter().map(|w| w.seg.len()).sum();
        // Outer 2*(16+10)=52; interior: three 4 m verticals north, two 4 m
        // verticals south, two 16 m horizontals = 52; minus 11 doorways.
        assert!((total - (52.0 + 52.0 - 11.0)).abs() < 1e-9, "total {total}");

        let tpl = HouseTemplate::mini();
        let all_on = (1u32 << tpl.candidates.len()) - 1;
        let plan = FloorPlan::new(Arc::clone(&tpl), 0, all_on).unwrap();
        let total: f64 = plan.geometry().walls.iter().map(|w| w.seg.len()).sum();
        // Outer 2*(12+6)=36; interior: two 4 m verticals + one 12 m
        // horizontal = 20; minus 5 doorways.
        assert!((total - (36.0 + 20.0 - 5.0)).abs() < 1e-9, "total {total}");
    }

    #[test]
    fn storage_bedroom_interface_is_always_walled() {
        let tpl = HouseTemplate::standard();
        let all_on = (1u32 << tpl.candidates.len()) - 1;
        let plan = FloorPlan::new(Arc::clone(&tpl), 0, all_on).unwrap();
        // The x=8 vertical between storage and bedroom has no candidate, so
        // even with every doorway enabled it spans the full 4 m.
        let found: f64 = plan
            .geometry()
            .walls
            .iter()
            .filter(|w| {
                w.neg_room == Some(RoomId::Storage) && w.pos_room == Some(RoomId::Bedroom)
            })
            .map(|w| w.seg.len())
            .sum();
        assert!((found - 4.0).abs() < 1e-9);
    }

    #[test]
    fn split_is_deterministic_disjoint_and_sized() {
        let plans = enumerate_floorplans(&HouseTemplate::standard());
        let n = default_holdout_n(plans.len());
        assert_eq!(n, 30);
        let s1 = split_plans(&plans, n, 77).unwrap();
        let s2 = split_plans(&plans, n, 77).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.holdout.len(), 30);
        assert_eq!(s1.train.len(), plans.len() - 30);
        let mut all: Vec<u32> = s1.train.iter().chain(s1.holdout.iter()).copied().collect();
        all.sort_unstable();
        let expect: Vec<u32> = (0..plans.len() as u32).collect();
        assert_eq!(all, expect);
        let s3 = split_plans(&plans, n, 78).unwrap();
        assert_ne!(s1, s3, "different seed gives a different split");
    }

    #[test]
    fn default_holdout_fraction_below_sixty() {
        assert_eq!(default_holdout_n(14), 4); // ceil(0.23 * 14) = ceil(3.22)
        assert_eq!(default_holdout_n(59), 14); // ceil(13.57)
        assert_eq!(default_holdout_n(60), 30);
    }

    #[test]
    fn room_path_matches_bfs_oracle_on_all_mini_plans() {
        let tpl = HouseTemplate::mini();
        let plans = enumerate_floorplans(&tpl);
        for plan in &plans {
            let ids = tpl.room_ids();
            for &from in &ids {
                for &to in &ids {
                    let path = shortest_room_path(plan, from, to).unwrap();
                    assert_eq!(path.first(), Some(&from));
                    assert_eq!(path.last(), Some(&to));
                    // Consecutive rooms adjacent.
                    for w in path.windows(2) {
                        assert!(plan.adjacent(w[0], w[1]));
                    }
                    // Length matches an independent BFS distance.
                    let mut dist = std::collections::BTreeMap::new();
                    dist.insert(from, 0usize);
                    let mut q = std::collections::VecDeque::from([from]);
                    while let Some(r) = q.pop_front() {
                        for n in plan.neighbors(r) {
                            if !dist.contains_key(&n) {
                                dist.insert(n, dist[&r] + 1);
                                q.push_back(n);
                            }
                        }
                    }
                    assert_eq!(path.len() - 1, dist[&to], "plan {}", plan.plan_id());
                }
            }
        }
    }

    #[test]
    fn grid_occupancy_blocks_walls_keeps_portals() {
        let tpl = HouseTemplate::mini();
        let plans = enumerate_floorplans(&tpl);
        // Plan with all doorways: the bedroom spoke portal is open.
        let plan = plans.iter().find(|p| p.doorway_mask() == 0b11111).unwrap();
        let geo = plan.geometry();
        // Portal center for the bedroom spoke: shared edge y=2, x in [0,4],
        // portal x in [1.5, 2.5]; the cell at (2.0, 2.0) must be walkable.
        let (ix, iy) = geo.grid.cell_of(Vec2::new(2.0, 2.025)).unwrap();
        assert!(!geo.blocked[geo.grid.idx(ix, iy)], "portal center walkable");
        // A point on the wall away from the portal is blocked.
        let (ix, iy) = geo.grid.cell_of(Vec2::new(3.4, 2.0)).unwrap();
        assert!(geo.blocked[geo.grid.idx(ix, iy)], "wall interior blocked");
        // Without the spoke, the same portal cell is blocked.
        let plan = plans.iter().find(|p| p.doorway_mask() == 0b11110).unwrap();
        let geo = plan.geometry();
        let (ix, iy) = geo.grid.cell_of(Vec2::new(2.0, 2.0)).unwrap();
        assert!(geo.blocked[geo.grid.idx(ix, iy)], "closed doorway blocked");
    }

    #[test]
    fn room_grid_matches_template_lookup() {
        let plan = &enumerate_floorplans(&HouseTemplate::mini())[0];
        let geo = plan.geometry();
        for iy in (0..geo.grid.ny).step_by(7) {
            for ix in (0..geo.grid.nx).step_by(7) {
                let c = geo.grid.center(ix, iy);
                let expect = plan.template().room_at(c).map(|r| r.ord() as u8).unwrap_or(255);
                assert_eq!(geo.room_grid[geo.grid.idx(ix, iy)], expect);
            }
        }
    }
}
