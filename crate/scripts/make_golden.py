"""Regenerate the SMILES golden corpus with RDKit as an independent oracle.

Counts are heavy atoms only (implicit hydrogens are not nodes) and bonds by
RDKit bond type after sanitization. Usage:

    python3 scripts/make_golden.py > crates/core/tests/data/golden_smiles.tsv
"""
from rdkit import Chem

CORPUS = [
    ("aspirin", "CC(=O)Oc1ccccc1C(=O)O"),
    ("caffeine", "Cn1c(=O)c2c(ncn2C)n(C)c1=O"),
    ("ibuprofen", "CC(C)Cc1ccc(C(C)C(=O)O)cc1"),
    ("benzene", "c1ccccc1"),
    ("ethanol", "CCO"),
    ("paracetamol", "CC(=O)Nc1ccc(O)cc1"),
    ("nicotine", "CN1CCCC1c1cccnc1"),
    ("metformin", "CN(C)C(=N)N=C(N)N"),
    ("carbon_dioxide", "O=C=O"),
    ("acetylene", "C#C"),
    ("diazepam", "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21"),
    ("warfarin", "CC(=O)CC(c1ccccc1)c1c(O)c2ccccc2oc1=O"),
    ("metronidazole", "Cc1ncc([N+](=O)[O-])n1CCO"),
    ("naproxen", "COc1ccc2cc([C@H](C)C(=O)O)ccc2c1"),
    ("serotonin", "NCCc1c[nH]c2ccc(O)cc12"),
    ("chlorpromazine", "CN(C)CCCN1c2ccccc2Sc2ccc(Cl)cc21"),
    ("bromazepam", "O=C1CN=C(c2ccccn2)c2cc(Br)ccc2N1"),
    ("fluorouracil", "O=c1[nH]cc(F)c(=O)[nH]1"),
    ("lidocaine", "CCN(CC)CC(=O)Nc1c(C)cccc1C"),
    ("cyclohexane_pct", "C%10CCCCC%10"),
]

NAMES = {
    Chem.BondType.SINGLE: 0,
    Chem.BondType.DOUBLE: 1,
    Chem.BondType.TRIPLE: 2,
    Chem.BondType.AROMATIC: 3,
}

print("# id\tsmiles\tnatoms\tnbonds\tnsingle\tndouble\tntriple\tnaromatic")
for ident, smi in CORPUS:
    mol = Chem.MolFromSmiles(smi)
    assert mol is not None, ident
    counts = [0, 0, 0, 0]
    for bond in mol.GetBonds():
        counts[NAMES[bond.GetBondType()]] += 1
    fields = [ident, smi, mol.GetNumAtoms(), mol.GetNumBonds(), *counts]
    print("\t".join(str(f) for f in fields))
