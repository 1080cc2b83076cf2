//! What the user is shown for a target pose: four intermediate poses, their
//! projected outlines, and one instruction per step.

use serde::{Deserialize, Serialize};

use crate::geometry::{decompose_pose, project_board, BoardSpec, CameraModel, ImageSize, Param, Pose};

/// Segments per board edge in the projected outline.
const OUTLINE_SEGMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
    None,
}

/// One guidance step: either place the board (translation) or turn it about
/// one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instruction {
    Translate {
        /// Board center in camera coordinates, mm.
        position_mm: [f64; 3],
        text: String,
    },
    Rotate {
        axis: Axis,
        angle_deg: f64,
        direction: Direction,
        text: String,
    },
}

impl Instruction {
    pub fn text(&self) -> &str {
        match self {
            Instruction::Translate { text, .. } | Instruction::Rotate { text, .. } => text,
        }
    }

    pub fn translate(p: &Pose) -> Self {
        Instruction::Translate {
            position_mm: [p.xt, p.yt, p.zt],
            text: format!(
                "move the board center to x={} mm, y={} mm, z={} mm with the board facing the camera",
                format_number(p.xt),
                format_number(p.yt),
                format_number(p.zt)
            ),
        }
    }

    pub fn rotate(axis: Axis, angle_rad: f64) -> Self {
        let deg = angle_rad.to_degrees();
        let shown = format_number(deg.abs());
        let direction = if shown == "0" {
            Direction::None
        } else if deg > 0.0 {
            Direction::Positive
        } else {
            Direction::Negative
        };
        let text = match direction {
            Direction::None => format!("no rotation around the {} axis", axis.label()),
            Direction::Positive => format!(
                "rotate {shown} degrees around the positive half axis of the {} axis",
                axis.label()
            ),
            Direction::Negative => format!(
                "rotate {shown} degrees around the negative half axis of the {} axis",
                axis.label()
            ),
        };
        Instruction::Rotate {
            axis,
            angle_deg: deg,
            direction,
            text,
        }
    }
}

/// Fixed-point with at most two decimals, trailing zeros removed.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// The four instructions for a target: translate, then rotate about X, Y, Z.
pub fn instructions(target: &Pose) -> [Instruction; 4] {
    [
        Instruction::translate(target),
        Instruction::rotate(Axis::X, target.xr),
        Instruction::rotate(Axis::Y, target.yr),
        Instruction::rotate(Axis::Z, target.zr),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceStep {
    /// 1 to 4.
    pub step: usize,
    pub pose: Pose,
    pub instruction: Instruction,
    /// Closed polyline of the physical board edge, px.
    pub outline: Vec<[f64; 2]>,
    /// Grid corners, px.
    pub corners: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidancePayload {
    pub target: Pose,
    /// Parameter the target was generated for.
    pub target_param: Param,
    pub steps: Vec<GuidanceStep>,
}

impl GuidancePayload {
    /// Decomposes `target` and projects every step through `model`.
    pub fn build(target: Pose, target_param: Param, board: &BoardSpec, model: &CameraModel, image: ImageSize) -> Self {
        let poses = decompose_pose(&target);
        let steps = poses
            .iter()
            .zip(instructions(&target))
            .enumerate()
            .map(|(i, (pose, instruction))| GuidanceStep {
                step: i + 1,
                pose: *pose,
                instruction,
                outline: board
                    .outline(OUTLINE_SEGMENTS)
                    .iter()
                    .filter_map(|q| model.project(q, pose).ok())
                    .map(|(u, v)| [u, v])
                    .collect(),
                corners: project_board(board, pose, model, image)
                    .corners
                    .iter()
                    .map(|c| [c.u, c.v])
                    .collect(),
            })
            .collect();
        Self {
            target,
            target_param,
            steps,
        }
    }
}

/// Allowed deviation between a realized and a target pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rotation_deg: f64,
    /// Translation tolerance as a fraction of the target depth.
    pub translation_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rotation_deg: 3.0,
            translation_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub component: String,
    /// Current minus target, degrees or mm.
    pub delta: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub components: Vec<ComponentMatch>,
    pub matched: bool,
}

/// Compares `current` against `target` component by component.
pub fn pose_match(current: &Pose, target: &Pose, tol: &Tolerances) -> MatchReport {
    let names = ["xr", "yr", "zr", "xt", "yt", "zt"];
    let (c, t) = (current.to_array(), target.to_array());
    let translation_tol = tol.translation_fraction * target.zt.abs();
    let components: Vec<ComponentMatch> = (0..6)
        .map(|i| {
            let (delta, tolerance) = if i < 3 {
                ((c[i] - t[i]).to_degrees(), tol.rotation_deg)
            } else {
                (c[i] - t[i], translation_tol)
            };
            ComponentMatch {
                component: names[i].to_string(),
                delta,
                tolerance,
                pass: delta.abs() <= tolerance,
            }
        })
        .collect();
    let matched = components.iter().all(|m| m.pass);
    MatchReport { components, matched }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraTruth;

    #[test]
    fn tilted_example_instructions() {
        let p = Pose::from_degrees(-30.0, 39.0, 22.0, 0.0, 0.0, 1000.0);
        let texts: Vec<String> = instructions(&p)[1..].iter().map(|i| i.text().to_string()).collect();
        assert_eq!(
            texts,
            [
                "rotate 30 degrees around the negative half axis of the X axis",
                "rotate 39 degrees around the positive half axis of the Y axis",
                "rotate 22 degrees around the positive half axis of the Z axis",
            ]
        );
    }

    #[test]
    fn zero_rotation_says_so() {
        let p = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        for i in &instructions(&p)[1..] {
            assert!(i.text().starts_with("no rotation"), "{}", i.text());
        }
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(30.000000000000004), "30");
        assert_eq!(format_number(22.5), "22.5");
        assert_eq!(format_number(-0.001), "0");
        assert_eq!(format_number(1000.0), "1000");
    }

    #[test]
    fn payload_steps_follow_decomposition() {
        let t = CameraTruth::default();
        let target = Pose::from_degrees(-20.0, 15.0, 10.0, 5.0, -5.0, 900.0);
        let g = GuidancePayload::build(target, Param::Alpha, &BoardSpec::default(), &t.model(), t.image);
        assert_eq!(g.steps.len(), 4);
        assert_eq!(g.steps[3].pose, target);
        for (s, p) in g.steps.iter().zip(decompose_pose(&target)) {
            assert_eq!(s.pose, p);
            assert_eq!(s.corners.len(), 40);
            assert_eq!(s.outline.first(), s.outline.last());
        }
    }

    #[test]
    fn matching() {
        let tol = Tolerances::default();
        let t = Pose::from_degrees(10.0, 20.0, 30.0, 0.0, 0.0, 1000.0);
        assert!(pose_match(&t, &t, &tol).matched);
        let off = Pose {
            xr: t.xr + 10f64.to_radians(),
            ..t
        };
        let r = pose_match(&off, &t, &tol);
        assert!(!r.matched);
        assert!(!r.components[0].pass && r.components[1..].iter().all(|c| c.pass));
        let near = Pose::from_degrees(11.4, 18.6, 31.0, 24.0, -20.0, 1020.0);
        assert!(pose_match(&near, &t, &tol).matched);
    }
}
