"""Legacy ASCII VTK writers for meshes and nodal snapshots."""

import numpy as np


def write_unstructured_grid(path, points, triangles, point_data=None, title="cutwave"):
    """Write a triangle mesh with optional nodal scalar fields.

    points is (n, 2), triangles (m, 3) referring to those points, and
    point_data a mapping name -> (n,) array.  The output is deterministic
    for identical inputs.
    """
    points = np.asarray(points, dtype=float)
    triangles = np.asarray(triangles)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {points.shape[0]} double",
    ]
    lines.extend(f"{p[0]:.16g} {p[1]:.16g} 0" for p in points)
    lines.append(f"CELLS {triangles.shape[0]} {4 * triangles.shape[0]}")
    lines.extend(f"3 {t[0]} {t[1]} {t[2]}" for t in triangles)
    lines.append(f"CELL_TYPES {triangles.shape[0]}")
    lines.extend("5" for _ in range(triangles.shape[0]))
    if point_data:
        lines.append(f"POINT_DATA {points.shape[0]}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.16g}" for v in values)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mesh(path, mesh, title="background mesh"):
    """Dump the full background mesh for inspection."""
    write_unstructured_grid(path, mesh.vertices, mesh.triangles, title=title)


def write_snapshot(path, system, u_I, field_name="u", title="snapshot"):
    """Write the active mesh with the extended field as point data.

    Exterior active nodes carry their extended values, so the plotted
    surface is the actual discrete solution.
    """
    mesh = system.mesh
    cls = system.cls
    points = mesh.vertices[cls.active_nodes]
    triangles = cls.node_active_index[mesh.triangles[cls.active]]
    u_full = system.extend(np.asarray(u_I, dtype=float))
    write_unstructured_grid(
        path, points, triangles, point_data={field_name: u_full}, title=title
    )
