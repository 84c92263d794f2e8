//! Fixed-bone-length kinematic trees and forward kinematics.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::skeleton::{AnatomyProfile, JointId, JOINT_COUNT};

/// A rooted tree whose bones have fixed lengths. Nodes are ordered so that
/// every parent precedes its children; node 0 is the root.
///
/// Every node with at least one child is *articulated*: it carries a
/// rotation that orients all of its child bones rigidly. Leaves carry none.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    parent: Vec<Option<usize>>,
    offset: Vec<Vector3<f64>>,
    slot: Vec<Option<usize>>,
    slot_node: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl KinematicTree {
    /// `nodes` lists `(parent, rest offset in the parent's frame)` with the
    /// root first. Panics if the ordering contract is broken.
    pub fn new(nodes: &[(Option<usize>, Vector3<f64>)]) -> Self {
        assert!(!nodes.is_empty(), "tree needs a root");
        assert!(nodes[0].0.is_none(), "node 0 must be the root");
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, (p, _)) in nodes.iter().enumerate().skip(1) {
            let p = p.expect("only node 0 may be parentless");
            assert!(p < i, "parents must precede children");
            children[p].push(i);
        }
        let mut slot = vec![None; n];
        let mut slot_node = Vec::new();
        for i in 0..n {
            if !children[i].is_empty() {
                slot[i] = Some(slot_node.len());
                slot_node.push(i);
            }
        }
        KinematicTree {
            parent: nodes.iter().map(|(p, _)| *p).collect(),
            offset: nodes.iter().map(|(_, o)| *o).collect(),
            slot,
            slot_node,
            children,
        }
    }

    /// The canonical 21-joint skeleton with bone lengths from `anatomy`.
    /// Node indices equal [`JointId::index`].
    pub fn skeleton(anatomy: &AnatomyProfile) -> Self {
        let nodes: Vec<_> = JointId::ALL
            .iter()
            .map(|j| match (j.parent(), j.rest_direction()) {
                (Some(p), Some(dir)) => (Some(p.index()), dir * anatomy.bone_length(*j)),
                _ => (None, Vector3::zeros()),
            })
            .collect();
        debug_assert_eq!(nodes.len(), JOINT_COUNT);
        Self::new(&nodes)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn offset(&self, node: usize) -> &Vector3<f64> {
        &self.offset[node]
    }

    pub fn bone_length(&self, node: usize) -> f64 {
        self.offset[node].norm()
    }

    pub fn slot(&self, node: usize) -> Option<usize> {
        self.slot[node]
    }

    pub fn slot_count(&self) -> usize {
        self.slot_node.len()
    }

    pub fn slot_node(&self, slot: usize) -> usize {
        self.slot_node[slot]
    }

    /// Parameters per frame: root translation plus one rotation per slot.
    pub fn params_per_frame(&self) -> usize {
        3 + 3 * self.slot_count()
    }

    /// Articulated strict ancestors of `node`, nearest first.
    pub fn ancestors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.parent[node], move |&p| self.parent[p])
    }

    /// Joint positions and global orientations for one frame.
    pub fn forward(&self, translation: &Vector3<f64>, local: &[Rotation3<f64>]) -> Pose {
        debug_assert_eq!(local.len(), self.slot_count());
        let n = self.len();
        let mut positions = Vec::with_capacity(n);
        let mut globals: Vec<Matrix3<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let (pos, base) = match self.parent[i] {
                None => (*translation, Matrix3::identity()),
                Some(p) => (positions[p] + globals[p] * self.offset[i], globals[p]),
            };
            let g = match self.slot[i] {
                Some(s) => base * local[s].matrix(),
                None => base,
            };
            positions.push(pos);
            globals.push(g);
        }
        Pose { positions, globals }
    }
}

#[derive(Debug, Clone)]
pub struct Pose {
    pub positions: Vec<Vector3<f64>>,
    pub globals: Vec<Matrix3<f64>>,
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn exp_map(v: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::new(*v)
}

pub(crate) fn log_map(r: &Rotation3<f64>) -> Vector3<f64> {
    r.scaled_axis()
}

/// Right Jacobian of SO(3): `exp(θ + dθ) ≈ exp(θ) · exp(J_r(θ) dθ)`.
pub(crate) fn right_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle = theta.norm();
    let k = skew(theta);
    if angle < 1e-5 {
        // Series expansion around zero.
        return Matrix3::identity() - 0.5 * k + k * k / 6.0;
    }
    let a2 = angle * angle;
    Matrix3::identity() - (1.0 - angle.cos()) / a2 * k + (angle - angle.sin()) / (a2 * angle) * k * k
}

/// Rotation taking unit vector `from` onto unit vector `to` with the smallest angle.
pub(crate) fn align_directions(from: &Vector3<f64>, to: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::rotation_between(from, to).unwrap_or_else(|| {
        // Antiparallel: any axis perpendicular to `from` works.
        let trial = if from.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let axis = Unit::new_normalize(from.cross(&trial));
        Rotation3::from_axis_angle(&axis, std::f64::consts::PI)
    })
}

/// Least-squares rotation `R` minimizing `Σ |R·a_i − b_i|²` (Kabsch).
pub(crate) fn kabsch(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Rotation3<f64> {
    match pairs {
        [] => Rotation3::identity(),
        [(a, b)] => align_directions(&a.normalize(), &b.normalize()),
        _ => {
            let mut cov = Matrix3::zeros();
            for (a, b) in pairs {
                cov += b * a.transpose();
            }
            let svd = cov.svd(true, true);
            let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            let mut d = Matrix3::identity();
            if (u * v_t).determinant() < 0.0 {
                d[(2, 2)] = -1.0;
            }
            let r = u * d * v_t;
            // Two parallel vectors leave the twist free; Kabsch then returns
            // an arbitrary but valid rotation, which is all we need.
            Rotation3::from_matrix_unchecked(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{derive_anatomy, RatioTable};
    use approx::assert_abs_diff_eq;

    #[test]
    fn skeleton_tree_matches_joint_topology() {
        let anatomy = derive_anatomy(1.75, &RatioTable::default_table()).unwrap();
        let tree = KinematicTree::skeleton(&anatomy);
        assert_eq!(tree.len(), 21);
        assert_eq!(tree.slot_count(), 16);
        for j in JointId::ALL {
            assert_eq!(tree.parent(j.index()), j.parent().map(JointId::index));
            assert_abs_diff_eq!(tree.bone_length(j.index()), anatomy.bone_length(j), epsilon = 1e-15);
        }
    }

    #[test]
    fn forward_kinematics_preserves_bone_lengths() {
        let anatomy = derive_anatomy(1.6, &RatioTable::default_table()).unwrap();
        let tree = KinematicTree::skeleton(&anatomy);
        let local: Vec<_> = (0..tree.slot_count())
            .map(|s| exp_map(&Vector3::new(0.3 * s as f64, -0.2, 1.1 - 0.1 * s as f64)))
            .collect();
        let pose = tree.forward(&Vector3::new(0.1, 0.2, 3.0), &local);
        for i in 1..tree.len() {
            let p = tree.parent(i).unwrap();
            let len = (pose.positions[i] - pose.positions[p]).norm();
            assert_abs_diff_eq!(len, tree.bone_length(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn right_jacobian_matches_composition() {
        for theta in [
            Vector3::new(0.3, -1.2, 0.7),
            Vector3::new(1e-7, 2e-7, -1e-7),
            Vector3::new(0.0, 0.0, 3.0),
        ] {
            let jr = right_jacobian(&theta);
            let d = Vector3::new(1e-6, -2e-6, 0.5e-6);
            let lhs = exp_map(&(theta + d));
            let rhs = exp_map(&theta) * exp_map(&(jr * d));
            assert_abs_diff_eq!((lhs.matrix() - rhs.matrix()).norm(), 0.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn kabsch_recovers_rotation() {
        let truth = exp_map(&Vector3::new(0.4, -0.9, 2.0));
        let pts = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.5), Vector3::new(-0.3, 0.1, 1.0)];
        let pairs: Vec<_> = pts.iter().map(|a| (*a, truth * a)).collect();
        let r = kabsch(&pairs);
        assert_abs_diff_eq!((r.matrix() - truth.matrix()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn antiparallel_alignment() {
        let a = Vector3::new(0.0, 1.0, 0.0);
        let r = align_directions(&a, &-a);
        assert_abs_diff_eq!((r * a + a).norm(), 0.0, epsilon = 1e-12);
    }
}
