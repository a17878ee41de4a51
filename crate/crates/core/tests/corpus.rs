use proptest::prelude::*;
use spanforge::corpus::{
    parse_fasta_str, write_fasta_string, SequenceRecord, Vocabulary, EOS_ID, NUM_SENTINELS, PAD_ID, RESIDUES,
};

fn residue_string(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(RESIDUES.iter().map(|&b| b as char).collect::<Vec<_>>()), 1..=max)
        .prop_map(|v| v.into_iter().collect())
}

#[test]
fn ids_are_a_bijection() {
    let vocab = Vocabulary::new();
    let size = RESIDUES.len() + 2 + NUM_SENTINELS;
    assert_eq!(size, 155);
    let mut seen = std::collections::HashSet::new();
    for id in 0..size {
        let name = vocab.token_name(id);
        assert_eq!(vocab.parse_token(&name), Some(id), "{name}");
        assert!(seen.insert(name));
    }
    assert_eq!(vocab.token_name(PAD_ID), "<pad>");
    assert_eq!(vocab.token_name(EOS_ID), "</s>");
}

proptest! {
    #[test]
    fn encode_decode_inverse(s in residue_string(512)) {
        let vocab = Vocabulary::new();
        let ids = vocab.encode(&s).unwrap();
        prop_assert_eq!(ids.len(), s.len());
        prop_assert!(ids.iter().all(|&t| vocab.is_residue(t)));
        prop_assert_eq!(vocab.decode(&ids).unwrap(), s);
    }

    #[test]
    fn fasta_round_trip_keeps_order(seqs in prop::collection::vec(residue_string(200), 0..20)) {
        let records: Vec<SequenceRecord> = seqs
            .iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::new(format!("r{i} desc"), s.clone()).unwrap())
            .collect();
        let parsed = parse_fasta_str(&write_fasta_string(&records)).unwrap();
        prop_assert_eq!(parsed.len(), records.len());
        for (a, b) in parsed.iter().zip(&records) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(&a.sequence, &b.sequence);
        }
    }

    #[test]
    fn wrapped_lines_are_joined(s in residue_string(300), width in 1usize..80) {
        let body: Vec<String> = s.as_bytes().chunks(width).map(|c| String::from_utf8(c.to_vec()).unwrap()).collect();
        let text = format!(">x\n{}\n\n>y\nAC\n", body.join("\n"));
        let parsed = parse_fasta_str(&text).unwrap();
        prop_assert_eq!(parsed.len(), 2);
        prop_assert_eq!(&parsed[0].sequence, &s);
    }
}
