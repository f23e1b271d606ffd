//! BS topology (one MN, gridded SNs with alternating carriers) and the
//! constant-speed street mobility of the UE.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::SimError;
use crate::geometry::Vec2;

/// Secondary-node identifier (index into the SN list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SnId(pub u32);

impl std::fmt::Display for SnId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Mn,
    Sn,
}

/// One base station.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub id: u32,
    pub role: NodeRole,
    pub position: Vec2,
    /// Carrier channel; SNs only.
    pub channel: Option<u8>,
}

/// The full BS layout for a run.
#[derive(Debug, Clone)]
pub struct Topology {
    pub sns: Vec<NodeDescriptor>,
    pub mn: NodeDescriptor,
}

impl Topology {
    pub fn sn_position(&self, id: SnId) -> Vec2 {
        self.sns[id.0 as usize].position
    }

    pub fn sn_channel(&self, id: SnId) -> u8 {
        self.sns[id.0 as usize].channel.expect("SNs always carry a channel")
    }

    pub fn channels(&self) -> Vec<u8> {
        self.sns.iter().map(|n| n.channel.unwrap()).collect()
    }

    /// Dump as CSV (`id,role,x,y,channel`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,role,x,y,channel\n");
        for n in self.sns.iter().chain(std::iter::once(&self.mn)) {
            let role = match n.role {
                NodeRole::Mn => "MN",
                NodeRole::Sn => "SN",
            };
            let ch = n.channel.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", n.id, role, n.position.x, n.position.y, ch));
        }
        out
    }
}

/// Build the BS layout.
///
/// Default grid: SN columns at x = 0, d, 2d, ... across the width and two
/// rows flanking the area mid-line at y = h/4 and 3h/4, carriers assigned
/// checkerboard-style so the two SNs nearest any street point differ. An
/// explicit `sn_positions` list overrides the grid, with carriers
/// alternating in list order. The MN sits at the area center unless placed
/// explicitly.
pub fn build_topology(cfg: &ScenarioConfig) -> Result<Topology, SimError> {
    if cfg.inter_bs_distance_m <= 0.0 {
        return Err(SimError::Scenario("inter_bs_distance_m must be positive".into()));
    }

    let mut sns = Vec::new();
    if cfg.sn_positions.is_empty() {
        let d = cfg.inter_bs_distance_m;
        let rows = [cfg.area_height_m * 0.25, cfg.area_height_m * 0.75];
        let mut col = 0u32;
        let mut x = 0.0;
        while x <= cfg.area_width_m + 1e-9 {
            for (ri, &y) in rows.iter().enumerate() {
                let id = sns.len() as u32;
                sns.push(NodeDescriptor {
                    id,
                    role: NodeRole::Sn,
                    position: Vec2::new(x.min(cfg.area_width_m), y),
                    channel: Some(((col as usize + ri) % 2) as u8),
                });
            }
            col += 1;
            x = f64::from(col) * d;
        }
    } else {
        for (i, p) in cfg.sn_positions.iter().enumerate() {
            sns.push(NodeDescriptor {
                id: i as u32,
                role: NodeRole::Sn,
                position: Vec2::new(p[0], p[1]),
                channel: Some((i % 2) as u8),
            });
        }
    }

    if sns.is_empty() {
        return Err(SimError::Scenario("topology has no SNs".into()));
    }

    let mn_pos = cfg
        .mn_position
        .map(|p| Vec2::new(p[0], p[1]))
        .unwrap_or_else(|| Vec2::new(cfg.area_width_m / 2.0, cfg.area_height_m / 2.0));
    let mn = NodeDescriptor { id: sns.len() as u32, role: NodeRole::Mn, position: mn_pos, channel: None };

    Ok(Topology { sns, mn })
}

/// Piecewise-linear street the UE shuttles along.
#[derive(Debug, Clone)]
pub struct StreetPath {
    waypoints: Vec<Vec2>,
    /// Cumulative arc length at each waypoint.
    cumulative: Vec<f64>,
}

impl StreetPath {
    pub fn new(waypoints: Vec<Vec2>) -> Result<Self, SimError> {
        if waypoints.len() < 2 {
            return Err(SimError::Scenario("street needs at least two waypoints".into()));
        }
        let mut cumulative = vec![0.0];
        for w in waypoints.windows(2) {
            let seg = w[0].distance(w[1]);
            if seg <= 0.0 {
                return Err(SimError::Scenario("street has a zero-length segment".into()));
            }
            cumulative.push(cumulative.last().unwrap() + seg);
        }
        Ok(Self { waypoints, cumulative })
    }

    /// Default street: the vertical mid-line between the SN columns.
    pub fn default_street(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        if cfg.street_waypoints.is_empty() {
            let x = cfg.area_width_m / 2.0;
            Self::new(vec![Vec2::new(x, 0.0), Vec2::new(x, cfg.area_height_m)])
        } else {
            Self::new(cfg.street_waypoints.iter().map(|p| Vec2::new(p[0], p[1])).collect())
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Point at arc length s (clamped to [0, length]).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.waypoints.len() - 2),
            Err(i) => i - 1,
        };
        let a = self.waypoints[i];
        let b = self.waypoints[i + 1];
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = (s - self.cumulative[i]) / seg;
        Vec2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
    }

    /// Unit tangent of the segment containing arc length s.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.waypoints.len() - 2),
            Err(i) => i - 1,
        };
        let a = self.waypoints[i];
        let b = self.waypoints[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        Vec2::new((b.x - a.x) / len, (b.y - a.y) / len)
    }
}

/// UE kinematic state: arc-length position on the street plus heading sign.
#[derive(Debug, Clone)]
pub struct UeState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Arc length along the street.
    arc: f64,
    /// +1 toward the end of the street, -1 back toward the start.
    dir: f64,
    speed: f64,
}

impl UeState {
    pub fn new(street: &StreetPath, start_offset: f64, speed: f64) -> Self {
        let arc = start_offset.clamp(0.0, street.length());
        let mut ue = Self { position: street.point_at(arc), velocity: Vec2::new(0.0, 0.0), arc, dir: 1.0, speed };
        ue.refresh(street);
        ue
    }

    fn refresh(&mut self, street: &StreetPath) {
        self.position = street.point_at(self.arc);
        let t = street.tangent_at(self.arc);
        self.velocity = Vec2::new(t.x * self.speed * self.dir, t.y * self.speed * self.dir);
    }

    /// Advance by dt at constant speed, bouncing at the street ends (the
    /// residual beyond an end is folded back).
    pub fn step(&mut self, street: &StreetPath, dt: f64) {
        debug_assert!(dt > 0.0);
        let len = street.length();
        let mut s = self.arc + self.dir * self.speed * dt;
        // Fold into [0, 2L) and reflect the upper half.
        let period = 2.0 * len;
        s = s.rem_euclid(period);
        if s > len {
            s = period - s;
            self.dir = -self.dir;
        }
        // Landing exactly on an endpoint reverses heading for the next step.
        if s >= len {
            self.dir = -1.0;
        } else if s <= 0.0 {
            self.dir = 1.0;
        }
        self.arc = s;
        self.refresh(street);
    }

    pub fn arc(&self) -> f64 {
        self.arc
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    #[test]
    fn default_grid_is_six_sns_plus_mn() {
        let cfg = ScenarioConfig::default();
        let topo = build_topology(&cfg).unwrap();
        assert_eq!(topo.sns.len(), 6);
        assert_eq!(topo.mn.position, Vec2::new(50.0, 50.0));

        let mut xs: Vec<f64> = topo.sns.iter().map(|n| n.position.x).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        assert_eq!(xs, vec![0.0, 50.0, 100.0]);
        let mut ys: Vec<f64> = topo.sns.iter().map(|n| n.position.y).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup();
        assert_eq!(ys, vec![25.0, 75.0]);

        // Pairwise min distance is the inter-BS distance.
        let mut min_d = f64::INFINITY;
        for (i, a) in topo.sns.iter().enumerate() {
            for b in &topo.sns[i + 1..] {
                min_d = min_d.min(a.position.distance(b.position));
            }
        }
        assert_eq!(min_d, 50.0);

        // Same-column SNs (the nearest pair to any street point) differ in channel.
        for a in &topo.sns {
            for b in &topo.sns {
                if a.id != b.id && a.position.x == b.position.x {
                    assert_ne!(a.channel, b.channel);
                }
            }
        }
    }

    #[test]
    fn wider_spacing_gives_two_by_two() {
        let cfg = ScenarioConfig { inter_bs_distance_m: 100.0, ..ScenarioConfig::default() };
        let topo = build_topology(&cfg).unwrap();
        assert_eq!(topo.sns.len(), 4);
    }

    #[test]
    fn explicit_positions_alternate_channels() {
        let cfg = ScenarioConfig {
            sn_positions: vec![[10.0, 10.0], [20.0, 20.0], [30.0, 30.0]],
            ..ScenarioConfig::default()
        };
        let topo = build_topology(&cfg).unwrap();
        assert_eq!(topo.sns.len(), 3);
        let ch: Vec<u8> = topo.channels();
        assert_eq!(ch, vec![0, 1, 0]);
    }

    #[test]
    fn rejects_bad_spacing() {
        let cfg = ScenarioConfig { inter_bs_distance_m: -1.0, ..ScenarioConfig::default() };
        assert!(build_topology(&cfg).is_err());
    }

    #[test]
    fn linear_motion() {
        let cfg = ScenarioConfig::default();
        let street = StreetPath::default_street(&cfg).unwrap();
        let mut ue = UeState::new(&street, 10.0, 10.0);
        assert_eq!(ue.position, Vec2::new(50.0, 10.0));
        ue.step(&street, 1.0);
        assert_eq!(ue.position, Vec2::new(50.0, 20.0));
        assert_eq!(ue.velocity, Vec2::new(0.0, 10.0));
    }

    #[test]
    fn bounce_folds_residual() {
        let cfg = ScenarioConfig::default();
        let street = StreetPath::default_street(&cfg).unwrap();
        let mut ue = UeState::new(&street, 99.5, 10.0);
        ue.step(&street, 0.1);
        // 99.5 + 1.0 = 100.5 folds to 99.5, heading reversed.
        assert!((ue.position.y - 99.5).abs() < 1e-9);
        assert_eq!(ue.velocity, Vec2::new(0.0, -10.0));
        // Speed magnitude conserved.
        let sp = (ue.velocity.x.powi(2) + ue.velocity.y.powi(2)).sqrt();
        assert!((sp - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sixty_seconds_is_six_traversals() {
        let cfg = ScenarioConfig::default();
        let street = StreetPath::default_street(&cfg).unwrap();
        let mut ue = UeState::new(&street, 0.0, 10.0);
        let mut bounces = 0;
        let mut last_dir = 1.0;
        for _ in 0..60_000 {
            ue.step(&street, 1.0e-3);
            if ue.dir != last_dir {
                bounces += 1;
                last_dir = ue.dir;
            }
            let y = ue.position.y;
            assert!((0.0..=100.0).contains(&y));
        }
        // 600 m over a 100 m street: 6 traversals, back at the start.
        assert_eq!(bounces, 6);
        assert!(ue.position.y.abs() < 1e-6, "y = {}", ue.position.y);
    }
}
