"""Synthetic molecule images, corruptions and manifest ingestion."""

from molvit.data.imageio import read_image, read_pgm, write_pgm
from molvit.data.manifest import SampleManifest, generate_dataset, generate_sample, load_manifest, write_manifest
from molvit.data.molecule import MoleculeGraph, gen_molecule, hill_formula, label
from molvit.data.render import AugmentParams, augment, render
from molvit.data.splitmix import SplitMix64, sample_stream

__all__ = [
    "AugmentParams",
    "MoleculeGraph",
    "SampleManifest",
    "SplitMix64",
    "augment",
    "gen_molecule",
    "generate_dataset",
    "generate_sample",
    "hill_formula",
    "label",
    "load_manifest",
    "read_image",
    "read_pgm",
    "render",
    "sample_stream",
    "write_manifest",
    "write_pgm",
]
