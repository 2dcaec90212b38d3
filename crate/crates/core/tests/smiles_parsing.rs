use gcnx_core::datasets::synth_motif_set;
use gcnx_core::miner::{canonical_key, LabeledGraph};
use gcnx_core::graph::Element;
use gcnx_core::smiles::{parse_smiles, Molecule};

/// Canonical keys of the connected pieces, sorted.
fn key(m: &Molecule) -> Vec<Vec<u8>> {
    let mask = vec![true; m.n_atoms()];
    let mut keys: Vec<Vec<u8>> = gcnx_core::graph::connected_components(&m.graph, &mask)
        .unwrap()
        .iter()
        .map(|c| canonical_key(&LabeledGraph::induced(m, c)).unwrap())
        .collect();
    keys.sort();
    keys
}

/// Counts atoms by scanning tokens: bracket groups, two-letter organic
/// symbols, single uppercase letters and aromatic lowercase letters.
fn count_atom_tokens(s: &str) -> usize {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut count = 0;
    while i < chars.len() {
        match chars[i] {
            '[' => {
                count += 1;
                while chars[i] != ']' {
                    i += 1;
                }
            }
            'C' if chars.get(i + 1) == Some(&'l') => {
                count += 1;
                i += 1;
            }
            'B' if chars.get(i + 1) == Some(&'r') => {
                count += 1;
                i += 1;
            }
            'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' | 'b' | 'c' | 'n' | 'o' | 'p' | 's' => count += 1,
            _ => {}
        }
        i += 1;
    }
    count
}

const CORPUS: &[&str] = &[
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "C1=CC=C(C=C1)C(C2=CC=CC=C2)Cl",
    "Brc1ccc(cc1)[N+](=O)[O-]",
    "OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O",
    "F/C=C/F",
    "[2H]C(Cl)(Cl)Cl",
    "CC1=CC2=C(C=C1)N=C(S2)N",
    "ClC1=CC=C(C=C1)C(=O)NCCN1CCOCC1",
    "C%10CC%10",
    "[Na+].[Cl-]",
    "c1ccc2c(c1)[nH]c1ccccc12",
    "C#CCBr",
    "OP(=O)(O)OC",
    "c1ccsc1.c1ccoc1",
    "IC(I)(I)I",
    "[Se]1C=CC=C1",
    "B(O)(O)c1ccccc1",
];

#[test]
fn atom_counts_match_token_scan() {
    for s in CORPUS {
        assert_eq!(parse_smiles(s).unwrap().n_atoms(), count_atom_tokens(s), "{s}");
    }
    let synth = synth_motif_set(200, "NO", 3).unwrap();
    for e in &synth.entries {
        assert_eq!(e.molecule.n_atoms(), count_atom_tokens(&e.molecule.source), "{}", e.molecule.source);
    }
}

#[test]
fn written_molecules_reparse_isomorphically() {
    // unknown elements are written as wildcards, which the reader refuses
    for s in CORPUS {
        let m = parse_smiles(s).unwrap();
        if m.atoms().iter().any(|a| a.symbol == Element::Other) {
            continue;
        }
        let again = parse_smiles(&m.to_smiles()).unwrap();
        assert_eq!(
            key(&m),
            key(&again),
            "{s} -> {}",
            m.to_smiles()
        );
    }
}

#[test]
fn errors_name_the_offset() {
    for (s, offset) in [("CC(C", 2), ("C1CC", 1), ("CC=", 2), ("C==C", 2), ("C$C", 1), ("C)C", 1)] {
        match parse_smiles(s) {
            Err(gcnx_core::Error::Parse { offset: o, .. }) => assert_eq!(o, offset, "{s}"),
            other => panic!("{s}: expected parse error, got {other:?}"),
        }
    }
}
