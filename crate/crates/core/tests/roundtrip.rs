use csi_sensing::features::{extract_chart_feature, extract_pos_feature, extract_rffi_feature};
use csi_sensing::ingest::{read_dataset, write_dataset};
use csi_sensing::model::validate_dataset;
use csi_sensing::synthgen::{preset_scenarios, Preset};
use csi_sensing::{Dataset, ScenarioMeta};

fn generate(preset: Preset, seed: u64) -> Vec<Dataset> {
    let meta = ScenarioMeta::square(6.0, 0.02).with_subcarriers(24);
    preset_scenarios(preset, meta, 1.0, seed)
        .into_iter()
        .map(|s| Dataset {
            meta: s.meta.clone(),
            samples: s.stream().unwrap().map(|x| x.unwrap()).collect(),
        })
        .collect()
}

#[test]
fn generated_data_survives_storage_and_featurizes() {
    for preset in [Preset::Indoor, Preset::Outdoor, Preset::DevClass] {
        for ds in generate(preset, 3) {
            assert!(validate_dataset(&ds).is_pass(), "{preset:?}: {}", validate_dataset(&ds));
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            assert_eq!(back, ds);
            for s in &back.samples {
                assert_eq!(extract_pos_feature(s).unwrap().0.len(), 4 * 4 * (24 / 12));
                assert_eq!(extract_chart_feature(s, 8).unwrap().0.len(), 4 * 4 * 2 * 8);
                assert_eq!(extract_rffi_feature(s).unwrap().shape(), [24, 3, 2]);
            }
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let bytes = |seed| {
        let mut buf = Vec::new();
        write_dataset(&generate(Preset::Indoor, seed)[0], &mut buf).unwrap();
        buf
    };
    assert_eq!(bytes(5), bytes(5));
    assert_ne!(bytes(5), bytes(6));
}
