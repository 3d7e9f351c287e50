"""Meshes, P1 assembly and auxiliary solves."""

from .mesh import MeshError, TetMesh, disk_mesh, euler_characteristic, mesh_product_tube, mesh_torus3, tag_regions
from .assembly import (AssembledForms, FormAssembler, MetricNotSPD, assemble, assemble_weighted_eps, quadrature_rule,
                       region_weights)
from .solvers import HarmonicExtension, RegionError, RegionForms, dirichlet_lowest, harmonic_extension, region_forms
