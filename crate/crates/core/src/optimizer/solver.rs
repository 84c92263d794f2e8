use nalgebra::{Rotation3, Vector3};

use super::energy::{EnergyBreakdown, FitProblem, FrameObservation, FrameState, PoseParams};
use super::kinematics::{exp_map, kabsch, KinematicTree};
use super::OptimizeError;
use crate::skeleton::CameraModel;

/// Outcome of a damped Gauss-Newton run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub params: PoseParams,
    pub initial: EnergyBreakdown,
    pub energy: EnergyBreakdown,
    /// Total energy after initialization and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Closed-form starting point: the root sits on its detected 3D position and
/// every articulated joint takes the rotation that best aligns its rest child
/// bones with the detected child directions. Frames without 3D detections
/// borrow the nearest initialized frame, re-centered on the 2D root when
/// one is available.
pub fn initialize_params(
    tree: &KinematicTree,
    observations: &[FrameObservation],
    camera: &CameraModel,
) -> Result<PoseParams, OptimizeError> {
    let mut states: Vec<Option<FrameState>> = observations
        .iter()
        .map(|obs| initialize_frame(tree, obs))
        .collect();
    if let Some(f) = observations.iter().position(FrameObservation::is_empty) {
        return Err(OptimizeError::DegenerateInput { frame: f });
    }
    let seeded: Vec<usize> = (0..states.len()).filter(|&f| states[f].is_some()).collect();
    if seeded.is_empty() && !states.is_empty() {
        return Err(OptimizeError::DegenerateInput { frame: 0 });
    }
    for f in 0..states.len() {
        if states[f].is_some() {
            continue;
        }
        let nearest = *seeded
            .iter()
            .min_by_key(|&&g| (g as i64 - f as i64).unsigned_abs())
            .expect("at least one seeded frame");
        let mut state = states[nearest].clone().expect("seeded");
        if let Some((px, _)) = observations[f].points2d[0] {
            state.translation = camera.unproject(&px, state.translation.z);
        }
        states[f] = Some(state);
    }
    Ok(PoseParams {
        frames: states.into_iter().map(|s| s.expect("filled").to_pose()).collect(),
    })
}

fn initialize_frame(tree: &KinematicTree, obs: &FrameObservation) -> Option<FrameState> {
    let present: Vec<&Vector3<f64>> = obs.points3d.iter().flatten().collect();
    if present.is_empty() {
        return None;
    }
    let root = obs.points3d[0].unwrap_or_else(|| {
        present.iter().copied().sum::<Vector3<f64>>() / present.len() as f64
    });
    let n = tree.len();
    let mut positions = vec![Vector3::zeros(); n];
    let mut globals = vec![Rotation3::identity(); n];
    let mut rotations = vec![Rotation3::identity(); tree.slot_count()];
    for j in 0..n {
        let parent_global = match tree.parent(j) {
            None => {
                positions[j] = root;
                Rotation3::identity()
            }
            Some(p) => {
                positions[j] = positions[p] + globals[p] * tree.offset(j);
                globals[p]
            }
        };
        let Some(slot) = tree.slot(j) else {
            globals[j] = parent_global;
            continue;
        };
        let anchor = if j == 0 { root } else { obs.points3d[j].unwrap_or(positions[j]) };
        let pairs: Vec<_> = tree
            .children(j)
            .iter()
            .filter_map(|&c| {
                let x = obs.points3d[c]?;
                let target = parent_global.inverse() * (x - anchor);
                (target.norm() > 0.0 && tree.offset(c).norm() > 0.0).then(|| (*tree.offset(c), target))
            })
            .collect();
        let local = kabsch(&pairs);
        rotations[slot] = local;
        globals[j] = parent_global * local;
    }
    Some(FrameState {
        translation: root,
        rotations,
    })
}

impl FitProblem<'_> {
    /// Minimizes the energy from `init` with Levenberg-style damping: a step
    /// is accepted only if it lowers the energy, otherwise the damping grows.
    pub fn solve(&self, init: &PoseParams) -> Result<SolveReport, OptimizeError> {
        let initial = self.energy(init)?;
        let cfg = self.config;
        let per = self.tree.params_per_frame();
        let mut states: Vec<FrameState> = init.frames.iter().map(FrameState::from_pose).collect();
        let mut current = initial;
        let mut history = vec![initial.total];
        let mut damping = cfg.initial_damping;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < cfg.max_iterations {
            iterations += 1;
            let (ne, _) = self
                .linearize(&states, true)
                .ok_or(OptimizeError::ProjectionBehindCamera)?;
            let diag = ne.hessian.diagonal();
            let max_diag = diag.iter().cloned().fold(0.0, f64::max);
            if max_diag == 0.0 {
                converged = true;
                break;
            }
            let floor = 1e-9 * max_diag;
            let rhs: Vec<f64> = ne.gradient.iter().map(|g| -g).collect();

            let mut accepted = None;
            while damping <= cfg.max_damping {
                let mut system = ne.hessian.clone();
                let shift: Vec<f64> = diag.iter().map(|d| damping * d.max(floor)).collect();
                system.add_diagonal(&shift);
                if let Some(chol) = system.cholesky() {
                    let step = chol.solve(&rhs);
                    let trial = apply_step(&states, &step, per);
                    if let Some(e) = self.evaluate(&trial) {
                        if e.total < current.total {
                            accepted = Some((trial, e));
                            break;
                        }
                    }
                }
                damping *= cfg.damping_increase;
            }

            let Some((trial, e)) = accepted else {
                // No damping level yields descent: numerically stationary.
                converged = true;
                break;
            };
            let decrease = current.total - e.total;
            states = trial;
            current = e;
            history.push(e.total);
            damping = (damping * cfg.damping_decrease).max(cfg.min_damping);
            if decrease <= cfg.tolerance {
                converged = true;
                break;
            }
        }

        Ok(SolveReport {
            params: PoseParams {
                frames: states.iter().map(FrameState::to_pose).collect(),
            },
            initial,
            energy: current,
            history,
            iterations,
            converged,
        })
    }
}

fn apply_step(states: &[FrameState], step: &[f64], per: usize) -> Vec<FrameState> {
    states
        .iter()
        .enumerate()
        .map(|(f, s)| {
            let d = &step[f * per..(f + 1) * per];
            FrameState {
                translation: s.translation + Vector3::new(d[0], d[1], d[2]),
                rotations: s
                    .rotations
                    .iter()
                    .enumerate()
                    .map(|(k, r)| {
                        let o = 3 + 3 * k;
                        r * exp_map(&Vector3::new(d[o], d[o + 1], d[o + 2]))
                    })
                    .collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::energy::tests::{camera, toy_tree};
    use crate::optimizer::EnergyConfig;
    use nalgebra::Vector2;

    fn ik_only() -> EnergyConfig {
        EnergyConfig {
            w_ik: 1.0,
            w_proj: 0.0,
            w_smooth: 0.0,
            w_depth: 0.0,
            ..EnergyConfig::default()
        }
    }

    /// Planar chain rotated about z by `a` at the root and `b` at the middle joint.
    fn planar_positions(tree: &KinematicTree, a: f64, b: f64) -> [Vector3<f64>; 3] {
        let ra = Rotation3::from_axis_angle(&Vector3::z_axis(), a);
        let rb = Rotation3::from_axis_angle(&Vector3::z_axis(), b);
        let p1 = ra * tree.offset(1);
        let p2 = p1 + ra * rb * tree.offset(2);
        [Vector3::zeros(), p1, p2]
    }

    #[test]
    fn matches_brute_force_grid_search() {
        let tree = KinematicTree::new(&[
            (None, Vector3::zeros()),
            (Some(0), Vector3::new(0.5, 0.0, 0.0)),
            (Some(1), Vector3::new(0.4, 0.0, 0.0)),
        ]);
        let targets = [
            Vector3::new(0.02, -0.01, 3.0),
            Vector3::new(0.41, 0.33, 3.0),
            Vector3::new(0.55, 0.71, 3.0),
        ];
        // Grid over both angles; for fixed angles the best translation is the
        // mean residual offset.
        let steps = 1440;
        let h = std::f64::consts::TAU / steps as f64;
        let mut best = (f64::INFINITY, [Vector3::zeros(); 3]);
        for i in 0..steps {
            for j in 0..steps {
                let q = planar_positions(&tree, i as f64 * h - std::f64::consts::PI, j as f64 * h - std::f64::consts::PI);
                let t = (0..3).map(|k| targets[k] - q[k]).sum::<Vector3<f64>>() / 3.0;
                let e: f64 = (0..3).map(|k| (t + q[k] - targets[k]).norm_squared()).sum();
                if e < best.0 {
                    best = (e, [t + q[0], t + q[1], t + q[2]]);
                }
            }
        }

        let obs = vec![FrameObservation {
            points3d: targets.iter().map(|p| Some(*p)).collect(),
            points2d: vec![None; 3],
        }];
        let cam = camera();
        let cfg = ik_only();
        let problem = FitProblem::new(&tree, &obs, &cam, &cfg).unwrap();
        let init = initialize_params(&tree, &obs, &cam).unwrap();
        let report = problem.solve(&init).unwrap();
        assert!(report.converged);
        assert!(report.energy.total <= best.0 + 1e-12);
        let fitted = report.params.forward(&tree);
        // One grid cell moves the farthest joint by at most (0.5 + 0.4)·h.
        for k in 0..3 {
            let d = (fitted[0].positions[k] - best.1[k]).norm();
            assert!(d < 0.9 * h * 2.0, "joint {k} off by {d}");
        }
    }

    #[test]
    fn energy_history_never_increases() {
        let tree = toy_tree();
        let cam = camera();
        let cfg = EnergyConfig::default();
        let obs: Vec<_> = (0..6)
            .map(|f| {
                let s = f as f64 * 0.1;
                let p3 = [
                    Vector3::new(s, 0.0, 4.0),
                    Vector3::new(s + 0.1, -0.48, 4.05),
                    Vector3::new(s + 0.05, -0.9, 4.1 + 0.01 * f as f64),
                ];
                FrameObservation {
                    points3d: p3.iter().map(|p| Some(*p + Vector3::new(0.01, -0.02, 0.03))).collect(),
                    points2d: p3.iter().map(|p| Some((cam.project_point(p).unwrap(), 0.9))).collect(),
                }
            })
            .collect();
        let problem = FitProblem::new(&tree, &obs, &cam, &cfg).unwrap();
        let report = problem.solve(&initialize_params(&tree, &obs, &cam).unwrap()).unwrap();
        assert!(report.history.len() >= 2);
        assert!(report.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.energy.total <= report.initial.total);
        assert_eq!(*report.history.last().unwrap(), report.energy.total);
    }

    #[test]
    fn frames_without_three_d_borrow_a_neighbor() {
        let tree = toy_tree();
        let cam = camera();
        let seeded = FrameObservation {
            points3d: vec![
                Some(Vector3::new(0.0, 0.0, 4.0)),
                Some(Vector3::new(0.0, -0.5, 4.0)),
                Some(Vector3::new(0.0, -0.9, 4.1)),
            ],
            points2d: vec![None; 3],
        };
        let root_px = cam.project_point(&Vector3::new(0.3, 0.0, 4.0)).unwrap();
        let blind = FrameObservation {
            points3d: vec![None; 3],
            points2d: vec![Some((root_px, 1.0)), None, None],
        };
        let init = initialize_params(&tree, &[seeded, blind], &cam).unwrap();
        assert!((init.frames[1].translation - Vector3::new(0.3, 0.0, 4.0)).norm() < 1e-12);
        assert_eq!(init.frames[1].rotations, init.frames[0].rotations);
    }

    #[test]
    fn empty_frame_is_degenerate() {
        let tree = toy_tree();
        let cam = camera();
        let full = FrameObservation {
            points3d: vec![Some(Vector3::new(0.0, 0.0, 4.0)); 3],
            points2d: vec![Some((Vector2::new(540.0, 960.0), 1.0)); 3],
        };
        let err = initialize_params(&tree, &[full, FrameObservation::empty(3)], &cam).unwrap_err();
        assert_eq!(err, OptimizeError::DegenerateInput { frame: 1 });
    }
}
