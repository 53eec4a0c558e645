"""One-off generator for the shipped offset-circles meshes.

Produces graded Delaunay triangulations of the domain between the unit
circle and the inner circle of radius 0.1 centered at (0.5, 0), with 80/60
fixed boundary points, grading toward the inner circle, Laplacian
smoothing, and validation through the package's Mesh class.  Run from the
repository root:

    python tools/gen_offset_mesh.py

Writes src/evcorr/data/offset_circles_{desk,paper}.{node,ele}.
"""

import pathlib
import sys

import numpy as np
from scipy.spatial import Delaunay, cKDTree

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from evcorr.mesh import Mesh, write_mesh  # noqa: E402
from evcorr.spaces import TaylorHood  # noqa: E402

R_OUT = 1.0
R_IN = 0.1
CENTER = np.array([0.5, 0.0])
N_OUT = 80
N_IN = 60


def boundary_points():
    th_out = 2 * np.pi * np.arange(N_OUT) / N_OUT
    outer = np.column_stack([np.cos(th_out), np.sin(th_out)])
    th_in = 2 * np.pi * np.arange(N_IN) / N_IN
    inner = CENTER + R_IN * np.column_stack([np.cos(th_in), np.sin(th_in)])
    return outer, inner


def spacing(pts, h_in, h_out, ramp):
    d_inner = np.linalg.norm(pts - CENTER, axis=-1) - R_IN
    return h_in + (h_out - h_in) * np.clip(d_inner / ramp, 0.0, 1.0)


def interior_seed(h_in, h_out, ramp, seed):
    rng = np.random.default_rng(seed)
    cand = rng.uniform(-1.0, 1.0, size=(250000, 2))
    r = np.linalg.norm(cand, axis=1)
    d_in = np.linalg.norm(cand - CENTER, axis=1) - R_IN
    rho = spacing(cand, h_in, h_out, ramp)
    keep = (r < R_OUT - 0.55 * rho) & (d_in > 0.55 * rho)
    cand = cand[keep]
    rho = rho[keep]

    outer, inner = boundary_points()
    fixed = np.vstack([outer, inner])
    accepted = []
    tree_pts = list(fixed)
    tree = cKDTree(fixed)
    pending = []
    for p, h in zip(cand, rho):
        d, _ = tree.query(p)
        if pending:
            dp = np.min(np.linalg.norm(np.array(pending) - p, axis=1))
            d = min(d, dp)
        if d >= 0.82 * h:
            accepted.append(p)
            pending.append(p)
            if len(pending) >= 200:
                tree_pts.extend(pending)
                tree = cKDTree(np.array(tree_pts))
                pending = []
    return np.array(accepted)


def in_domain(points):
    r = np.linalg.norm(points, axis=-1)
    d = np.linalg.norm(points - CENTER, axis=-1)
    return (r < R_OUT) & (d > R_IN)


def smooth(points, n_fixed, iters=25):
    pts = points.copy()
    for _ in range(iters):
        tri = Delaunay(pts)
        simplices = tri.simplices
        centroids = pts[simplices].mean(axis=1)
        keep = in_domain(centroids)
        simplices = simplices[keep]
        nbr_sum = np.zeros_like(pts)
        nbr_cnt = np.zeros(len(pts))
        for a, b in ((0, 1), (1, 2), (2, 0)):
            va, vb = simplices[:, a], simplices[:, b]
            np.add.at(nbr_sum, va, pts[vb])
            np.add.at(nbr_cnt, va, 1.0)
            np.add.at(nbr_sum, vb, pts[va])
            np.add.at(nbr_cnt, vb, 1.0)
        target = nbr_sum / np.maximum(nbr_cnt, 1.0)[:, None]
        moved = pts.copy()
        moved[n_fixed:] = pts[n_fixed:] + 0.6 * (target[n_fixed:] - pts[n_fixed:])
        ok = in_domain(moved[n_fixed:])
        moved[n_fixed:][~ok] = pts[n_fixed:][~ok]
        pts = moved
    return pts


def thin(pts, n_fixed, h_in, h_out, ramp, factor=0.72):
    """Drop interior points that ended up too close to anything else."""
    kept = list(pts[:n_fixed])
    for p in pts[n_fixed:]:
        h = spacing(p, h_in, h_out, ramp)
        tree = cKDTree(np.array(kept))
        d, _ = tree.query(p)
        if d >= factor * h:
            kept.append(p)
    return np.array(kept)


def build(h_in, h_out, ramp, seed):
    outer, inner = boundary_points()
    interior = interior_seed(h_in, h_out, ramp, seed)
    pts = np.vstack([outer, inner, interior])
    n_fixed = len(outer) + len(inner)
    pts = smooth(pts, n_fixed)
    pts = thin(pts, n_fixed, h_in, h_out, ramp)
    pts = smooth(pts, n_fixed, iters=10)

    tri = Delaunay(pts)
    simplices = tri.simplices
    centroids = pts[simplices].mean(axis=1)
    simplices = simplices[in_domain(centroids)]

    used = np.unique(simplices)
    remap = -np.ones(len(pts), dtype=int)
    remap[used] = np.arange(len(used))
    vertices = pts[used]
    triangles = remap[simplices]

    markers = np.zeros(len(vertices), dtype=int)
    old_ids = used
    markers[old_ids < N_OUT] = 0  # placeholder, set below by position
    r = np.linalg.norm(vertices, axis=1)
    d = np.linalg.norm(vertices - CENTER, axis=1)
    markers[np.isclose(r, R_OUT, atol=1e-12)] = 1
    markers[np.isclose(d, R_IN, atol=1e-12)] = 2

    mesh = Mesh(vertices, triangles, markers)
    return mesh


def report(mesh, name):
    space = TaylorHood(mesh)
    lens = mesh.edge_lengths
    # worst angle via law of cosines over all corners
    tri_xy = mesh.vertices[mesh.triangles]
    angles = []
    for i in range(3):
        a = tri_xy[:, (i + 1) % 3] - tri_xy[:, i]
        b = tri_xy[:, (i + 2) % 3] - tri_xy[:, i]
        cosang = np.sum(a * b, axis=1) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        )
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
    angles = np.concatenate(angles)
    print(
        f"{name}: {mesh.num_vertices} vertices, {mesh.num_triangles} triangles, "
        f"min edge {lens.min():.7g}, max edge {lens.max():.7g}, "
        f"min angle {angles.min():.2f} deg, "
        f"velocity dofs {space.n_velocity}, pressure dofs {space.n_pressure}, "
        f"total {space.n_velocity + space.n_pressure}"
    )


def main():
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "src" / "evcorr" / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, params in {
        "offset_circles_desk": dict(h_in=0.014, h_out=0.105, ramp=0.5, seed=20240901),
        "offset_circles_paper": dict(h_in=0.016, h_out=0.046, ramp=0.45, seed=20240902),
    }.items():
        mesh = build(**params)
        report(mesh, name)
        node_text, ele_text = write_mesh(mesh)
        (out_dir / f"{name}.node").write_text(node_text)
        (out_dir / f"{name}.ele").write_text(ele_text)
        print(f"wrote {out_dir / name}.node/.ele")


if __name__ == "__main__":
    main()
