use detsketch::coding::{
    bit_width, bucket_message_matrix, decode_bucket_message, embed_bits, from_binary, to_binary, CodeSpec, LinkGraph,
    OuterCode, ReedSolomon,
};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn reed_solomon_corrects_up_to_capacity() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for (k, len) in [(4, 12), (8, 20), (16, 64), (3, 255 - 100)] {
        let rs = ReedSolomon::new(k, len).unwrap();
        let t = rs.correctable();
        assert_eq!(t, (len - k) / 2);
        for _ in 0..50 {
            let msg: Vec<u8> = (0..k).map(|_| r.gen()).collect();
            let mut word = rs.encode(&msg);
            assert_eq!(word.len(), len);
            let errors = r.gen_range(0..=t);
            for p in sample(&mut r, len, errors) {
                word[p] ^= r.gen_range(1..=255u8);
            }
            assert_eq!(rs.decode(&word).as_deref(), Some(&msg[..]), "k={k} len={len} errors={errors}");
        }
    }
}

#[test]
fn reed_solomon_erasures_count_half() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let rs = ReedSolomon::new(6, 18).unwrap();
    for _ in 0..100 {
        let msg: Vec<u8> = (0..6).map(|_| r.gen()).collect();
        let word = rs.encode(&msg);
        // 2 * errors + erasures <= 12
        let erasures = r.gen_range(0..=12usize);
        let errors = (12 - erasures) / 2;
        let picks = sample(&mut r, 18, erasures + errors).into_vec();
        let mut got: Vec<Option<u8>> = word.iter().copied().map(Some).collect();
        for &p in &picks[..erasures] {
            got[p] = None;
        }
        for &p in &picks[erasures..] {
            got[p] = Some(word[p] ^ r.gen_range(1..=255u8));
        }
        assert_eq!(rs.decode_with_erasures(&got).as_deref(), Some(&msg[..]));
    }
}

#[test]
fn reed_solomon_never_returns_a_wrong_codeword_silently() {
    // Beyond capacity the decoder may fail, but anything it returns must
    // re-encode to a word within distance t of the input.
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let rs = ReedSolomon::new(4, 12).unwrap();
    for _ in 0..300 {
        let msg: Vec<u8> = (0..4).map(|_| r.gen()).collect();
        let mut word = rs.encode(&msg);
        for p in sample(&mut r, 12, 6) {
            word[p] ^= r.gen_range(1..=255u8);
        }
        if let Some(m) = rs.decode(&word) {
            let dist = rs.encode(&m).iter().zip(&word).filter(|(a, b)| a != b).count();
            assert!(dist <= rs.correctable());
        }
    }
}

#[test]
fn bit_code_round_trip_with_flips() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let spec = CodeSpec::reed_solomon(40, 96).unwrap();
    assert!(spec.block_bits() >= 96);
    for _ in 0..100 {
        let bits: Vec<u8> = (0..40).map(|_| r.gen_range(0..2)).collect();
        let mut word = spec.encode(&bits);
        // Flipping bits inside at most `correctable_symbols` bytes is recoverable.
        let symbols = word.len() / 8;
        for s in sample(&mut r, symbols, spec.correctable_symbols()) {
            word[8 * s + r.gen_range(0..8)] ^= 1;
        }
        assert_eq!(spec.decode(&word), Some(bits));
    }
}

#[test]
fn bucket_pairs_decode_through_the_inner_code() {
    let spec = CodeSpec::reed_solomon(16, 48).unwrap();
    let msg = to_binary(0xBEEF, 16);
    let word = spec.encode(&msg);
    let a = 3.5;
    let col = embed_bits(a, &word);
    let mut pairs: Vec<(f64, f64)> = col.chunks(2).map(|p| (p[0] + 0.1, p[1] - 0.2)).collect();
    assert_eq!(decode_bucket_message(&pairs, &spec), Some(msg.clone()));
    // A few noisy pairs inside one symbol still decode.
    for p in &mut pairs[..4] {
        std::mem::swap(&mut p.0, &mut p.1);
    }
    assert_eq!(decode_bucket_message(&pairs, &spec).map(|b| from_binary(&b)), Some(0xBEEF));
    assert_eq!(decode_bucket_message(&pairs[1..], &spec), None);
}

#[test]
fn outer_code_recovers_index_from_most_blocks() {
    let d1 = 16;
    let outer = OuterCode::new(1 << 20, d1).unwrap();
    for i in [0usize, 1, 12345, (1 << 20) - 1] {
        let mut blocks: Vec<Option<u8>> = outer.enc_index(i).into_iter().map(Some).collect();
        assert_eq!(outer.dec_index(&blocks.iter().map(|b| b.unwrap()).collect::<Vec<_>>()), Some(i));
        for b in blocks.iter_mut().step_by(4) {
            *b = None;
        }
        assert_eq!(outer.dec_index_erasures(&blocks), Some(i));
    }
}

#[test]
fn link_graph_is_connected_and_regular() {
    for seed in 0..20 {
        let g = LinkGraph::new(12, 4, seed).unwrap();
        assert!(g.is_connected());
        for r in 0..12 {
            let nbrs = g.neighbors(r);
            assert_eq!(nbrs.len(), 4);
            // Matchings are symmetric.
            for (l, &u) in nbrs.iter().enumerate() {
                assert_eq!(g.neighbor(u, l), r);
            }
        }
    }
}

#[test]
fn partition_matrix_rejects_overlap() {
    let msgs = vec![vec![0u8]; 4];
    assert!(bucket_message_matrix(4, &[vec![0, 1], vec![1, 2, 3]], &msgs).is_err());
    assert!(bucket_message_matrix(4, &[vec![0, 1]], &msgs).is_err());
    assert!(bucket_message_matrix(4, &[vec![0, 1], vec![2, 3]], &msgs).is_ok());
}

proptest! {
    #[test]
    fn binary_round_trip(v in 0usize..1 << 30) {
        let w = bit_width(v + 1);
        prop_assert_eq!(from_binary(&to_binary(v, w)), v);
    }

    #[test]
    fn embedded_bits_extract_exactly(bits in proptest::collection::vec(0u8..2, 1..40), a in 0.01f64..1e6) {
        let col = embed_bits(a, &bits);
        let got: Vec<u8> = col.chunks(2).map(|p| detsketch::coding::extract_bit(p[0], p[1])).collect();
        prop_assert_eq!(got, bits);
    }
}
