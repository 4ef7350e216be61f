//! Round-trip and determinism properties of the canonical encoding, over
//! randomly generated transactions covering every payload family.

use std::collections::BTreeSet;

use bdsas_core::*;
use proptest::collection::{btree_set, vec};
use proptest::option;
use proptest::prelude::*;

fn arb_node_id() -> impl Strategy<Value = NodeId> {
    "[a-z][a-z0-9-]{0,12}".prop_map(|s| NodeId::new(s))
}

fn arb_device_id() -> impl Strategy<Value = DeviceId> {
    "[a-z][a-z0-9-]{0,12}".prop_map(|s| DeviceId::new(s))
}

fn arb_zone_id() -> impl Strategy<Value = ZoneId> {
    "z[0-9]{1,3}".prop_map(|s| ZoneId::new(s))
}

fn arb_digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest)
}

fn arb_signature() -> impl Strategy<Value = Signature> {
    any::<[u8; 32]>().prop_map(|seed| SecretKey::from_seed(&seed).sign(b"x"))
}

fn arb_range() -> impl Strategy<Value = FrequencyRange> {
    (3550.0f64..3690.0, 1.0f64..150.0)
        .prop_map(|(low, span)| FrequencyRange::new(low, low + span))
}

fn arb_record() -> impl Strategy<Value = ClientRecord> {
    (
        arb_device_id(),
        prop_oneof![Just(Category::Pal), Just(Category::Gaa)],
        -10.0f64..47.0,
        btree_set(arb_device_id(), 0..5),
        any::<bool>(),
    )
        .prop_map(|(device, category, max_eirp_dbm, neighbors, witness_eligible)| ClientRecord {
            device,
            category,
            max_eirp_dbm,
            neighbors,
            witness_eligible,
        })
}

fn arb_params() -> impl Strategy<Value = ContractParams> {
    (1u64..120, 10u64..1000, 1u16..4, 0u64..100, 1u16..5, btree_set(0u16..15, 0..15))
        .prop_map(|(hb, life, per, fee, k, pal)| ContractParams {
            heartbeat_interval: SimDuration::from_secs(hb),
            grant_lifetime: SimDuration::from_secs(life),
            channels_per_grant: per,
            grant_fee: TokenAmount::from_tokens(fee),
            endorse_k: k,
            witness_vote_timeout: SimDuration::from_secs(60),
            pal_reserved: pal,
        })
}

fn arb_channel_update() -> impl Strategy<Value = ChannelUpdate> {
    (
        vec(0u16..15, 0..6),
        any::<bool>(),
        prop_oneof![
            Just(AvailabilityReason::Open),
            Just(AvailabilityReason::IncumbentProtected),
            Just(AvailabilityReason::RegulatoryClosed),
        ],
    )
        .prop_map(|(channels, available, reason)| ChannelUpdate { channels, available, reason })
}

fn arb_payload() -> impl Strategy<Value = TxPayload> {
    let regulatory = (
        prop_oneof![Just(RuleScope::Global), arb_zone_id().prop_map(RuleScope::Zone)],
        prop_oneof![
            arb_channel_update().prop_map(RegulatoryRule::ChannelAvailability),
            btree_set(arb_device_id(), 0..4).prop_map(|devices| RegulatoryRule::PalRegistry { devices }),
            arb_params().prop_map(RegulatoryRule::Params),
        ],
        any::<u64>(),
    )
        .prop_map(|(scope, rule, effective_height)| {
            TxPayload::Regulatory(RTxPayload { scope, rule, effective_height })
        });

    let sync_body = prop_oneof![
        (arb_record(), any::<u64>())
            .prop_map(|(record, lchain_height)| SyncBody::Registration { record, lchain_height }),
        (any::<u64>(), arb_digest(), vec(any::<u8>(), 0..80))
            .prop_map(|(round, output, proof)| SyncBody::VrfSubmission { round, output, proof }),
        (any::<u64>(), vec(arb_node_id(), 0..5))
            .prop_map(|(round, committee)| SyncBody::CommitteeOutcome { round, committee }),
        (vec((arb_digest(), vec((arb_node_id(), any::<u64>().prop_map(TokenAmount)), 1..4)), 0..3), any::<u64>())
            .prop_map(|(claims, lchain_height)| SyncBody::FeeClearing {
                claims: claims
                    .into_iter()
                    .map(|(grant_id, splits)| FeeClaim { grant_id, splits })
                    .collect(),
                lchain_height,
            }),
    ];
    let sync = (arb_zone_id(), sync_body, vec((arb_node_id(), arb_signature()), 0..4)).prop_map(
        |(zone, body, atts)| {
            TxPayload::Sync(STxPayload {
                zone,
                body,
                attestations: atts
                    .into_iter()
                    .map(|(server, signature)| Attestation { server, signature })
                    .collect(),
            })
        },
    );

    let channel = prop_oneof![
        arb_channel_update().prop_map(CTxPayload::Channels),
        (any::<u64>(), vec(arb_node_id(), 1..6))
            .prop_map(|(round, committee)| CTxPayload::CommitteeUpdate { round, committee }),
        (vec(arb_digest(), 0..4), any::<u64>())
            .prop_map(|(grant_ids, gchain_height)| CTxPayload::FeeCleared { grant_ids, gchain_height }),
        btree_set(arb_device_id(), 0..4).prop_map(|devices| CTxPayload::PalRegistry { devices }),
        arb_params().prop_map(CTxPayload::Params),
    ]
    .prop_map(TxPayload::Channel);

    let device = prop_oneof![
        arb_record().prop_map(DTxPayload::Register),
        arb_record().prop_map(DTxPayload::Update),
        (arb_device_id(), any::<bool>())
            .prop_map(|(device, eligible)| DTxPayload::WitnessFlag { device, eligible }),
        (arb_device_id(), any::<bool>())
            .prop_map(|(device, approve)| DTxPayload::WitnessVote { device, approve }),
    ]
    .prop_map(TxPayload::Device);

    let access = (
        arb_device_id(),
        prop_oneof![
            Just(RequestType::Grant),
            Just(RequestType::Heartbeat),
            Just(RequestType::Relinquish)
        ],
        option::of(arb_range()),
        0.0f64..47.0,
        vec(any::<u8>(), 0..32),
        any::<u64>().prop_map(TokenAmount),
        option::of(arb_digest()),
    )
        .prop_map(|(device, request, desired, eirp_dbm, measurement, fee_deposit, grant_id)| {
            TxPayload::Access(AccessRequest {
                device,
                request,
                desired,
                eirp_dbm,
                measurement,
                fee_deposit,
                grant_id,
            })
        });

    prop_oneof![regulatory, sync, channel, device, access]
}

fn arb_tx() -> impl Strategy<Value = Transaction> {
    (arb_node_id(), any::<u64>(), arb_payload(), any::<[u8; 32]>()).prop_map(
        |(proposer, nonce, payload, seed)| {
            let key = SecretKey::from_seed(&seed);
            let identity = NodeIdentity {
                id: proposer.clone(),
                role: Role::Client,
                public_key: key.public(),
                zones: BTreeSet::new(),
            };
            UnsignedTransaction { proposer, nonce, payload }
                .sign(&key, &identity)
                .expect("matching identity")
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tx_roundtrips(tx in arb_tx()) {
        let bytes = tx.encoded();
        let back = Transaction::decoded(&bytes).expect("decode");
        prop_assert_eq!(&back, &tx);
        prop_assert_eq!(back.encoded(), bytes);
    }

    #[test]
    fn encoding_is_deterministic(tx in arb_tx()) {
        prop_assert_eq!(tx.encoded(), tx.clone().encoded());
        let reconstructed = Transaction {
            proposer: tx.proposer.clone(),
            nonce: tx.nonce,
            payload: tx.payload.clone(),
            signature: tx.signature,
        };
        prop_assert_eq!(reconstructed.encoded(), tx.encoded());
    }

    #[test]
    fn encoded_len_matches(tx in arb_tx()) {
        prop_assert_eq!(tx.encoded_len(), tx.encoded().len());
    }

    #[test]
    fn digest_ignores_signature(tx in arb_tx(), seed in any::<[u8; 32]>()) {
        let mut other = tx.clone();
        other.signature = SecretKey::from_seed(&seed).sign(b"different");
        prop_assert_eq!(other.digest(), tx.digest());
    }

    #[test]
    fn truncation_never_panics(tx in arb_tx(), cut in 0usize..100) {
        let bytes = tx.encoded();
        let cut = cut.min(bytes.len());
        let _ = Transaction::decoded(&bytes[..bytes.len() - cut]);
    }

    #[test]
    fn block_roundtrips(txs in vec(arb_tx(), 0..5), height in 1u64..1000, t in any::<u64>()) {
        let block = Block::new(height, sha256(b"parent"), SimTime(t), txs);
        let json = serde_json::to_string(&block).unwrap();
        let back: Block<Transaction> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back.hash(), block.hash());
    }

    #[test]
    fn block_hash_ignores_flags(txs in vec(arb_tx(), 0..5)) {
        let mut block = Block::new(3, Digest::ZERO, SimTime(0), txs);
        let before = block.hash();
        block.validation_flags = vec![true; block.txs.len()];
        prop_assert_eq!(block.hash(), before);
    }
}
