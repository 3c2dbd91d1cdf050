//! Binned-SAH bounding volume hierarchy with refit, degradation tracking and
//! selective subtree rebuilds between frames.

mod aabb;

use std::fmt::Write as _;

use thiserror::Error;

pub use aabb::Aabb;

use crate::geometry::Vec3;
use crate::scene::Triangle;

pub const TRAVERSAL_COST: f64 = 1.0;
pub const INTERSECTION_COST: f64 = 1.5;
pub const MAX_LEAF_SIZE: usize = 4;
pub const SAH_BINS: usize = 16;
/// Hits closer than this to the ray origin are ignored.
pub const SELF_HIT_EPSILON: f64 = 1e-6;

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum BvhError {
    #[error("ray direction is not unit length (|d| = {0})")]
    NonUnitDirection(f64),
    #[error("primitive id {0} out of range")]
    InvalidPrimitive(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior { left: u32, right: u32 },
    Leaf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    pub kind: NodeKind,
    pub parent: u32,
    /// Range into the primitive permutation covered by this subtree.
    pub first: u32,
    pub count: u32,
    pub subtree_sah_cost: f64,
    /// Subtree cost when it was last (re)built.
    pub built_subtree_cost: f64,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Leaf
    }

    fn local_ratio(&self) -> f64 {
        if self.built_subtree_cost > 0.0 {
            self.subtree_sah_cost / self.built_subtree_cost
        } else {
            1.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub triangle_id: u32,
    pub point: Vec3,
    pub barycentric: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateThresholds {
    pub refit_max: f64,
    pub subtree_max: f64,
}

impl Default for UpdateThresholds {
    fn default() -> Self {
        UpdateThresholds {
            refit_max: 1.25,
            subtree_max: 2.0,
        }
    }
}

/// Ordered from cheapest to most expensive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UpdateAction {
    Keep,
    RefitOnly,
    RebuildSubtrees,
    RebuildFull,
}

/// Decide how to maintain the hierarchy for this frame.
pub fn update_policy(
    degradation: f64,
    any_moved: bool,
    thresholds: &UpdateThresholds,
) -> UpdateAction {
    if !any_moved {
        UpdateAction::Keep
    } else if degradation <= thresholds.refit_max {
        UpdateAction::RefitOnly
    } else if degradation <= thresholds.subtree_max {
        UpdateAction::RebuildSubtrees
    } else {
        UpdateAction::RebuildFull
    }
}

/// Möller–Trumbore. Returns `(t, u, v)` for any `t`; callers apply the range.
#[inline]
pub fn intersect_triangle(tri: &Triangle, origin: Vec3, dir: Vec3) -> Option<(f64, f64, f64)> {
    const BARY_TOL: f64 = 1e-12;
    let [a, b, c] = tri.vertices;
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(p) * inv;
    if !(-BARY_TOL..=1.0 + BARY_TOL).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < -BARY_TOL || u + v > 1.0 + BARY_TOL {
        return None;
    }
    Some((e2.dot(q) * inv, u.max(0.0), v.max(0.0)))
}

#[derive(Clone, Debug, Default)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    pub root: u32,
    /// Primitive permutation; leaves reference contiguous runs of it.
    pub prim_indices: Vec<u32>,
    prim_leaf: Vec<u32>,
    pub built_cost: f64,
    pub current_cost: f64,
}

struct BuildInput<'a> {
    bounds: &'a [Aabb],
    centroids: Vec<Vec3>,
}

impl Bvh {
    /// Build over triangles.
    pub fn build(triangles: &[Triangle]) -> Bvh {
        let bounds: Vec<Aabb> = triangles.iter().map(|t| t.bounds()).collect();
        Self::build_from_bounds(&bounds)
    }

    /// Build over arbitrary primitives given their bounds.
    pub fn build_from_bounds(bounds: &[Aabb]) -> Bvh {
        let mut bvh = Bvh {
            prim_indices: (0..bounds.len() as u32).collect(),
            prim_leaf: vec![0; bounds.len()],
            ..Bvh::default()
        };
        if bounds.is_empty() {
            return bvh;
        }
        let input = BuildInput {
            bounds,
            centroids: bounds.iter().map(|b| b.center()).collect(),
        };
        bvh.root = bvh.build_range(&input, 0, bounds.len(), NO_PARENT);
        bvh.built_cost = bvh.nodes[bvh.root as usize].subtree_sah_cost;
        bvh.current_cost = bvh.built_cost;
        bvh
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn primitive_count(&self) -> usize {
        self.prim_indices.len()
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes
            .get(self.root as usize)
            .map_or_else(Aabb::empty, |n| n.bounds)
    }

    /// Primitive ids stored in a leaf.
    pub fn leaf_primitives(&self, node: &BvhNode) -> &[u32] {
        &self.prim_indices[node.first as usize..(node.first + node.count) as usize]
    }

    fn build_range(&mut self, input: &BuildInput, start: usize, end: usize, parent: u32) -> u32 {
        let idx = self.nodes.len() as u32;
        let ids = &self.prim_indices[start..end];
        let bounds = ids
            .iter()
            .fold(Aabb::empty(), |b, &i| b.union(&input.bounds[i as usize]));
        self.nodes.push(BvhNode {
            bounds,
            kind: NodeKind::Leaf,
            parent,
            first: start as u32,
            count: (end - start) as u32,
            subtree_sah_cost: 0.0,
            built_subtree_cost: 0.0,
        });
        let n = end - start;
        let split = if n > 1 {
            self.choose_split(input, start, end, &bounds)
        } else {
            None
        };
        match split {
            None => {
                for &p in &self.prim_indices[start..end] {
                    self.prim_leaf[p as usize] = idx;
                }
                let cost = INTERSECTION_COST * n as f64 * bounds.surface_area();
                let node = &mut self.nodes[idx as usize];
                node.subtree_sah_cost = cost;
                node.built_subtree_cost = cost;
            }
            Some(mid) => {
                let left = self.build_range(input, start, mid, idx);
                let right = self.build_range(input, mid, end, idx);
                let cost = TRAVERSAL_COST * bounds.surface_area()
                    + self.nodes[left as usize].subtree_sah_cost
                    + self.nodes[right as usize].subtree_sah_cost;
                let node = &mut self.nodes[idx as usize];
                node.kind = NodeKind::Interior { left, right };
                node.subtree_sah_cost = cost;
                node.built_subtree_cost = cost;
            }
        }
        idx
    }

    /// Binned SAH split. Partitions `prim_indices[start..end]` stably and
    /// returns the split point, or `None` to make a leaf.
    fn choose_split(
        &mut self,
        input: &BuildInput,
        start: usize,
        end: usize,
        bounds: &Aabb,
    ) -> Option<usize> {
        let n = end - start;
        let ids = &self.prim_indices[start..end];
        let mut cb = Aabb::empty();
        for &i in ids {
            cb.grow(input.centroids[i as usize]);
        }
        let parent_area = bounds.surface_area();
        let leaf_cost = INTERSECTION_COST * n as f64;

        let mut best: Option<(f64, usize, usize)> = None;
        for axis in 0..3 {
            let lo = cb.min[axis];
            let extent = cb.max[axis] - lo;
            if extent <= 0.0 {
                continue;
            }
            let bin_of =
                |c: f64| (((c - lo) / extent * SAH_BINS as f64) as usize).min(SAH_BINS - 1);
            let mut counts = [0usize; SAH_BINS];
            let mut boxes = [Aabb::empty(); SAH_BINS];
            for &i in ids {
                let b = bin_of(input.centroids[i as usize][axis]);
                counts[b] += 1;
                boxes[b] = boxes[b].union(&input.bounds[i as usize]);
            }
            let mut right_area = [0.0; SAH_BINS];
            let mut right_count = [0usize; SAH_BINS];
            let mut acc = Aabb::empty();
            let mut cnt = 0;
            for b in (1..SAH_BINS).rev() {
                acc = acc.union(&boxes[b]);
                cnt += counts[b];
                right_area[b] = acc.surface_area();
                right_count[b] = cnt;
            }
            let mut left = Aabb::empty();
            let mut lcnt = 0;
            for b in 1..SAH_BINS {
                left = left.union(&boxes[b - 1]);
                lcnt += counts[b - 1];
                if lcnt == 0 || right_count[b] == 0 {
                    continue;
                }
                let cost = if parent_area > 0.0 {
                    TRAVERSAL_COST
                        + INTERSECTION_COST
                            * (left.surface_area() * lcnt as f64
                                + right_area[b] * right_count[b] as f64)
                            / parent_area
                } else {
                    TRAVERSAL_COST + INTERSECTION_COST * n as f64
                };
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, axis, b));
                }
            }
        }

        match best {
            Some((cost, axis, bin)) if n > MAX_LEAF_SIZE || cost < leaf_cost => {
                let lo = cb.min[axis];
                let extent = cb.max[axis] - lo;
                let (mut l, r): (Vec<u32>, Vec<u32>) = ids.iter().partition(|&&i| {
                    let c = input.centroids[i as usize][axis];
                    ((((c - lo) / extent) * SAH_BINS as f64) as usize).min(SAH_BINS - 1) < bin
                });
                let mid = start + l.len();
                l.extend(r);
                self.prim_indices[start..end].copy_from_slice(&l);
                Some(mid)
            }
            None if n > MAX_LEAF_SIZE => Some(start + n / 2),
            _ => None,
        }
    }

    /// current_cost / built_cost, or 1 for an empty tree.
    pub fn degradation(&self) -> f64 {
        if self.is_empty() || self.built_cost <= 0.0 {
            1.0
        } else {
            self.current_cost / self.built_cost
        }
    }

    /// Recompute bounds above moved triangles; topology is unchanged.
    pub fn refit(&mut self, triangles: &[Triangle], moved: &[u32]) -> Result<(), BvhError> {
        self.refit_with(|i| triangles[i as usize].bounds(), moved)
    }

    pub fn refit_bounds(&mut self, bounds: &[Aabb], moved: &[u32]) -> Result<(), BvhError> {
        self.refit_with(|i| bounds[i as usize], moved)
    }

    fn refit_with(
        &mut self,
        bounds_of: impl Fn(u32) -> Aabb,
        moved: &[u32],
    ) -> Result<(), BvhError> {
        if let Some(&bad) = moved
            .iter()
            .find(|&&id| id as usize >= self.prim_indices.len())
        {
            return Err(BvhError::InvalidPrimitive(bad));
        }
        if moved.is_empty() || self.is_empty() {
            return Ok(());
        }
        let mut dirty = vec![false; self.nodes.len()];
        for &id in moved {
            let mut n = self.prim_leaf[id as usize];
            while n != NO_PARENT && !dirty[n as usize] {
                dirty[n as usize] = true;
                n = self.nodes[n as usize].parent;
            }
        }
        // children always have larger indices than their parent
        for idx in (0..self.nodes.len()).rev() {
            if !dirty[idx] {
                continue;
            }
            let node = &self.nodes[idx];
            let (bounds, cost) = match node.kind {
                NodeKind::Leaf => {
                    let b = self
                        .leaf_primitives(node)
                        .iter()
                        .fold(Aabb::empty(), |b, &p| b.union(&bounds_of(p)));
                    (b, INTERSECTION_COST * node.count as f64 * b.surface_area())
                }
                NodeKind::Interior { left, right } => {
                    let l = &self.nodes[left as usize];
                    let r = &self.nodes[right as usize];
                    let b = l.bounds.union(&r.bounds);
                    (
                        b,
                        TRAVERSAL_COST * b.surface_area() + l.subtree_sah_cost + r.subtree_sah_cost,
                    )
                }
            };
            let node = &mut self.nodes[idx];
            node.bounds = bounds;
            node.subtree_sah_cost = cost;
        }
        self.current_cost = self.nodes[self.root as usize].subtree_sah_cost;
        Ok(())
    }

    pub fn rebuild_full(&mut self, triangles: &[Triangle]) {
        *self = Bvh::build(triangles);
    }

    /// Rebuild the subtrees where degradation is concentrated: starting at the
    /// root, follow the single child whose local ratio exceeds `refit_max`;
    /// when both or neither child exceed it, rebuild that node. Quality is then
    /// re-baselined. Returns the number of subtrees rebuilt.
    pub fn rebuild_subtrees(&mut self, triangles: &[Triangle], refit_max: f64) -> usize {
        let bounds: Vec<Aabb> = triangles.iter().map(|t| t.bounds()).collect();
        self.rebuild_subtrees_with(&bounds, refit_max)
    }

    pub fn rebuild_subtrees_with(&mut self, bounds: &[Aabb], refit_max: f64) -> usize {
        if self.is_empty() {
            return 0;
        }
        let mut targets = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.local_ratio() <= refit_max {
                continue;
            }
            match node.kind {
                NodeKind::Leaf => targets.push(n),
                NodeKind::Interior { left, right } => {
                    let l = self.nodes[left as usize].local_ratio() > refit_max;
                    let r = self.nodes[right as usize].local_ratio() > refit_max;
                    match (l, r) {
                        (true, false) => stack.push(left),
                        (false, true) => stack.push(right),
                        _ => targets.push(n),
                    }
                }
            }
        }
        let input = BuildInput {
            bounds,
            centroids: bounds.iter().map(|b| b.center()).collect(),
        };
        for &t in &targets {
            let (first, count, parent) = {
                let n = &self.nodes[t as usize];
                (n.first as usize, n.count as usize, n.parent)
            };
            let new_root = self.build_range(&input, first, first + count, parent);
            let mut copy = self.nodes[new_root as usize].clone();
            copy.parent = parent;
            if let NodeKind::Interior { left, right } = copy.kind {
                self.nodes[left as usize].parent = t;
                self.nodes[right as usize].parent = t;
            } else {
                for i in first..first + count {
                    let p = self.prim_indices[i];
                    self.prim_leaf[p as usize] = t;
                }
            }
            self.nodes[t as usize] = copy;
        }
        self.compact();
        self.recompute_costs();
        self.rebaseline();
        targets.len()
    }

    /// Drop unreachable nodes and renumber in preorder.
    fn compact(&mut self) {
        let mut out: Vec<BvhNode> = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, NO_PARENT, None::<(u32, bool)>)];
        while let Some((old, parent, link)) = stack.pop() {
            let new = out.len() as u32;
            let mut node = self.nodes[old as usize].clone();
            node.parent = parent;
            if let Some((p, is_left)) = link {
                if let NodeKind::Interior { left, right } = &mut out[p as usize].kind {
                    if is_left {
                        *left = new;
                    } else {
                        *right = new;
                    }
                }
            }
            if let NodeKind::Interior { left, right } = node.kind {
                stack.push((right, new, Some((new, false))));
                stack.push((left, new, Some((new, true))));
            } else {
                for i in node.first..node.first + node.count {
                    self.prim_leaf[self.prim_indices[i as usize] as usize] = new;
                }
            }
            out.push(node);
        }
        self.nodes = out;
        self.root = 0;
    }

    fn recompute_costs(&mut self) {
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            let cost = match node.kind {
                NodeKind::Leaf => {
                    INTERSECTION_COST * node.count as f64 * node.bounds.surface_area()
                }
                NodeKind::Interior { left, right } => {
                    TRAVERSAL_COST * node.bounds.surface_area()
                        + self.nodes[left as usize].subtree_sah_cost
                        + self.nodes[right as usize].subtree_sah_cost
                }
            };
            self.nodes[idx].subtree_sah_cost = cost;
        }
        self.current_cost = self.nodes[self.root as usize].subtree_sah_cost;
    }

    fn rebaseline(&mut self) {
        for n in &mut self.nodes {
            n.built_subtree_cost = n.subtree_sah_cost;
        }
        self.built_cost = self.current_cost;
    }

    /// Refit for `moved`, then apply the policy. Returns the action taken.
    pub fn maintain(
        &mut self,
        triangles: &[Triangle],
        moved: &[u32],
        thresholds: &UpdateThresholds,
    ) -> Result<UpdateAction, BvhError> {
        if moved.is_empty() {
            return Ok(UpdateAction::Keep);
        }
        self.refit(triangles, moved)?;
        let action = update_policy(self.degradation(), true, thresholds);
        match action {
            UpdateAction::Keep | UpdateAction::RefitOnly => {}
            UpdateAction::RebuildSubtrees => {
                self.rebuild_subtrees(triangles, thresholds.refit_max);
            }
            UpdateAction::RebuildFull => self.rebuild_full(triangles),
        }
        Ok(action)
    }

    /// Nearest hit with `t ∈ (SELF_HIT_EPSILON, t_max)`; equal `t` resolves to the lowest id.
    pub fn intersect_nearest(
        &self,
        triangles: &[Triangle],
        origin: Vec3,
        dir: Vec3,
        t_max: f64,
    ) -> Result<Option<RayHit>, BvhError> {
        if !dir.is_unit(1e-9) {
            return Err(BvhError::NonUnitDirection(dir.norm()));
        }
        Ok(self.nearest_unchecked(triangles, origin, dir, t_max, None))
    }

    pub(crate) fn nearest_unchecked(
        &self,
        triangles: &[Triangle],
        origin: Vec3,
        dir: Vec3,
        t_max: f64,
        ignore: Option<u32>,
    ) -> Option<RayHit> {
        if self.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(f64, u32, f64, f64)> = None;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        if let Some(t0) = self.nodes[self.root as usize]
            .bounds
            .ray_range(origin, inv, 0.0, t_max)
        {
            stack.push((self.root, t0));
        }
        while let Some((n, t_enter)) = stack.pop() {
            if let Some((bt, ..)) = best {
                if t_enter > bt {
                    continue;
                }
            }
            let node = &self.nodes[n as usize];
            match node.kind {
                NodeKind::Leaf => {
                    for &p in self.leaf_primitives(node) {
                        if Some(p) == ignore {
                            continue;
                        }
                        if let Some((t, u, v)) =
                            intersect_triangle(&triangles[p as usize], origin, dir)
                        {
                            if t > SELF_HIT_EPSILON && t < t_max {
                                let better = match best {
                                    None => true,
                                    Some((bt, bid, ..)) => t < bt || (t == bt && p < bid),
                                };
                                if better {
                                    best = Some((t, p, u, v));
                                }
                            }
                        }
                    }
                }
                NodeKind::Interior { left, right } => {
                    let limit = best.map_or(t_max, |b| b.0);
                    let hl = self.nodes[left as usize]
                        .bounds
                        .ray_range(origin, inv, 0.0, limit);
                    let hr = self.nodes[right as usize]
                        .bounds
                        .ray_range(origin, inv, 0.0, limit);
                    match (hl, hr) {
                        (Some(a), Some(b)) => {
                            if a <= b {
                                stack.push((right, b));
                                stack.push((left, a));
                            } else {
                                stack.push((left, a));
                                stack.push((right, b));
                            }
                        }
                        (Some(a), None) => stack.push((left, a)),
                        (None, Some(b)) => stack.push((right, b)),
                        (None, None) => {}
                    }
                }
            }
        }
        best.map(|(t, id, u, v)| RayHit {
            t,
            triangle_id: id,
            point: origin + dir * t,
            barycentric: (u, v),
        })
    }

    /// True iff a triangle outside `ignore` blocks the open segment (a, b),
    /// with an endpoint margin of 1e-6·|b − a|.
    pub fn occluded(&self, triangles: &[Triangle], a: Vec3, b: Vec3, ignore: &[u32]) -> bool {
        if self.is_empty() {
            return false;
        }
        let len = a.distance(b);
        if len <= 0.0 {
            return false;
        }
        let dir = (b - a) / len;
        let eps = 1e-6 * len;
        let (t_lo, t_hi) = (eps, len - eps);
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(self.root);
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.bounds.ray_range(a, inv, 0.0, t_hi).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf => {
                    for &p in self.leaf_primitives(node) {
                        if ignore.contains(&p) {
                            continue;
                        }
                        if let Some((t, ..)) = intersect_triangle(&triangles[p as usize], a, dir) {
                            if t > t_lo && t < t_hi {
                                return true;
                            }
                        }
                    }
                }
                NodeKind::Interior { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }

    /// Ids of primitives whose bounds touch the segment `origin + t·dir`, `t ∈ [0, t_max]`.
    pub fn overlapping_segment(&self, origin: Vec3, dir: Vec3, t_max: f64, out: &mut Vec<u32>) {
        if self.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack: Vec<u32> = vec![self.root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.bounds.ray_range(origin, inv, 0.0, t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf => out.extend_from_slice(self.leaf_primitives(node)),
                NodeKind::Interior { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Debug dump: `node_id,parent,min_x,min_y,min_z,max_x,max_y,max_z,leaf_start,leaf_count`.
    /// Interior nodes leave the leaf columns empty; the root's parent is -1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "node_id,parent,min_x,min_y,min_z,max_x,max_y,max_z,leaf_start,leaf_count\n",
        );
        for (i, n) in self.nodes.iter().enumerate() {
            let parent = if n.parent == NO_PARENT {
                -1
            } else {
                n.parent as i64
            };
            let leaf = if n.is_leaf() {
                format!("{},{}", n.first, n.count)
            } else {
                ",".to_string()
            };
            let _ = writeln!(
                s,
                "{i},{parent},{},{},{},{},{},{},{leaf}",
                n.bounds.min.x,
                n.bounds.min.y,
                n.bounds.min.z,
                n.bounds.max.x,
                n.bounds.max.y,
                n.bounds.max.z
            );
        }
        s
    }

    /// Full-tree structural check: containment, coverage and parent links.
    pub fn check_invariants(&self, prim_count: usize) -> Result<(), String> {
        if self.is_empty() {
            return if prim_count == 0 {
                Ok(())
            } else {
                Err("empty tree over non-empty input".into())
            };
        }
        let mut seen = vec![0u32; prim_count];
        let mut stack = vec![self.root];
        let mut visited = 0usize;
        while let Some(n) = stack.pop() {
            visited += 1;
            if visited > self.nodes.len() {
                return Err("cycle detected".into());
            }
            let node = &self.nodes[n as usize];
            match node.kind {
                NodeKind::Leaf => {
                    for &p in self.leaf_primitives(node) {
                        seen[p as usize] += 1;
                    }
                }
                NodeKind::Interior { left, right } => {
                    for c in [left, right] {
                        let child = &self.nodes[c as usize];
                        if child.parent != n {
                            return Err(format!("node {c} has parent {} not {n}", child.parent));
                        }
                        if !node.bounds.contains(&child.bounds) {
                            return Err(format!("node {n} does not contain child {c}"));
                        }
                        stack.push(c);
                    }
                }
            }
        }
        if let Some(p) = seen.iter().position(|&c| c != 1) {
            return Err(format!("primitive {p} appears {} times", seen[p]));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(a: Vec3, b: Vec3, c: Vec3) -> Triangle {
        Triangle::new(a, b, c, 0, 0)
    }

    fn facing(z: f64) -> Triangle {
        tri(
            Vec3::new(-1.0, -1.0, z),
            Vec3::new(2.0, -1.0, z),
            Vec3::new(-1.0, 2.0, z),
        )
    }

    #[test]
    fn single_triangle_is_a_leaf() {
        let t = facing(0.0);
        let bvh = Bvh::build(&[t]);
        assert_eq!(bvh.nodes.len(), 1);
        assert!(bvh.nodes[0].is_leaf());
        assert_eq!(bvh.root_bounds(), t.bounds());
        assert_eq!(bvh.degradation(), 1.0);
    }

    #[test]
    fn disjoint_pair_splits() {
        let a = facing(0.0);
        let b = tri(
            Vec3::new(100.0, 100.0, 100.0),
            Vec3::new(101.0, 100.0, 100.0),
            Vec3::new(100.0, 101.0, 100.0),
        );
        let bvh = Bvh::build(&[a, b]);
        assert_eq!(bvh.nodes.len(), 3);
        let NodeKind::Interior { left, right } = bvh.nodes[0].kind else {
            panic!("root should be interior")
        };
        let l = &bvh.nodes[left as usize];
        let r = &bvh.nodes[right as usize];
        assert!(l.is_leaf() && r.is_leaf());
        assert_eq!((l.count, r.count), (1, 1));
    }

    #[test]
    fn empty_scene_has_no_hits() {
        let bvh = Bvh::build(&[]);
        assert!(bvh
            .intersect_nearest(&[], Vec3::ZERO, Vec3::X, f64::INFINITY)
            .unwrap()
            .is_none());
        assert!(!bvh.occluded(&[], Vec3::ZERO, Vec3::X, &[]));
        assert_eq!(bvh.degradation(), 1.0);
    }

    #[test]
    fn centroid_hit_at_distance_five() {
        let t = facing(5.0);
        let tris = [t];
        let bvh = Bvh::build(&tris);
        let c = t.centroid();
        let hit = bvh
            .intersect_nearest(&tris, Vec3::new(c.x, c.y, 0.0), Vec3::Z, f64::INFINITY)
            .unwrap()
            .unwrap();
        assert!((hit.t - 5.0).abs() < 1e-12);
        assert!(bvh
            .intersect_nearest(&tris, Vec3::new(c.x, c.y, 0.0), -Vec3::Z, f64::INFINITY)
            .unwrap()
            .is_none());
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        let bvh = Bvh::build(&[facing(1.0)]);
        assert!(matches!(
            bvh.intersect_nearest(&[facing(1.0)], Vec3::ZERO, Vec3::new(0.0, 0.0, 2.0), 10.0),
            Err(BvhError::NonUnitDirection(_))
        ));
    }

    #[test]
    fn wall_blocks_segment() {
        let tris = [facing(1.0)];
        let bvh = Bvh::build(&tris);
        assert!(bvh.occluded(&tris, Vec3::ZERO, Vec3::new(0.0, 0.0, 2.0), &[]));
        assert!(!bvh.occluded(&tris, Vec3::ZERO, Vec3::new(0.0, 0.0, 2.0), &[0]));
        assert!(!bvh.occluded(&tris, Vec3::ZERO, Vec3::new(0.0, 0.0, 0.5), &[]));
        // segment ending on the wall is not blocked by it
        assert!(!bvh.occluded(&tris, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), &[]));
    }

    #[test]
    fn empty_refit_is_bit_identical() {
        let tris: Vec<Triangle> = (0..20).map(|i| facing(i as f64)).collect();
        let mut bvh = Bvh::build(&tris);
        let before = bvh.nodes.clone();
        bvh.refit(&tris, &[]).unwrap();
        assert_eq!(bvh.nodes, before);
        assert!(matches!(
            bvh.refit(&tris, &[99]),
            Err(BvhError::InvalidPrimitive(99))
        ));
    }

    #[test]
    fn policy_thresholds() {
        let th = UpdateThresholds::default();
        assert_eq!(update_policy(1.0, false, &th), UpdateAction::Keep);
        assert_eq!(update_policy(1.1, true, &th), UpdateAction::RefitOnly);
        assert_eq!(update_policy(1.5, true, &th), UpdateAction::RebuildSubtrees);
        assert_eq!(update_policy(2.5, true, &th), UpdateAction::RebuildFull);
    }

    #[test]
    fn csv_dump_has_row_per_node() {
        let tris: Vec<Triangle> = (0..10).map(|i| facing(i as f64 * 3.0)).collect();
        let bvh = Bvh::build(&tris);
        let csv = bvh.to_csv();
        assert_eq!(csv.lines().count(), bvh.nodes.len() + 1);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,-1,"));
    }
}
