"""Generate a few synthetic molecules, print their labels and save the drawings.

Run: python demos/02_synthetic_molecules.py [out_dir]
"""

import sys
from pathlib import Path

from molvit.data import SplitMix64, gen_molecule, render, write_pgm
from molvit.data.render import AugmentParams, augment
from molvit.tokenizer import split

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_molecules")
out.mkdir(exist_ok=True)

for i in range(4):
    rng = SplitMix64(2024 ^ i)
    mol, label = gen_molecule(rng)
    print(f"{i}: {len(mol.atoms)} atoms, {len(mol.bonds)} bonds  {label}")
    print("   tokens:", split(label))
    clean = render(mol, 224)
    noisy = augment(clean, rng, AugmentParams(sp_density=0.01, atom_drop=0.5, bond_single=0.5, artifacts=2), mol)
    write_pgm(out / f"mol_{i}.pgm", clean)
    write_pgm(out / f"mol_{i}_augmented.pgm", noisy)

print("images written to", out)
