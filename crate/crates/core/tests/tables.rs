use uwsim::cli_report::{emit_table, BenchmarkTable, TableFormat};
use uwsim::depth_eval::{DatasetSummary, Pooling};

const DATASETS: [&str; 3] = ["FLSea-Canyon", "FLSea-Red Sea", "SQUID"];

type Row<'a> = (&'a str, [Option<(f64, f64)>; 3]);

fn rows_to_summaries(rows: &[Row<'_>]) -> Vec<DatasetSummary> {
    let mut out = Vec::new();
    for (model, cells) in rows {
        for (dataset, cell) in DATASETS.iter().zip(cells) {
            if let Some((abs_rel, delta1)) = cell {
                out.push(DatasetSummary {
                    model: Some(model.to_string()),
                    dataset: Some(dataset.to_string()),
                    pooling: Pooling::PerImage,
                    image_count: 1,
                    excluded_images: 0,
                    valid_pixels: 1,
                    abs_rel: *abs_rel,
                    delta: vec![*delta1, 1.0, 1.0],
                    delta_thresholds: vec![1.25, 1.5625, 1.953125],
                    silog: 0.0,
                });
            }
        }
    }
    out
}

#[test]
fn zero_shot_table_bolds_one_row() {
    let s = rows_to_summaries(&[
        ("ZoeDepth", [Some((1.5907, 0.2345)), Some((1.3335, 0.2109)), Some((1.3214, 0.0968))]),
        ("Metric3D V2 (ViT-S)", [Some((1.5331, 0.0967)), Some((0.8130, 0.2136)), Some((1.3059, 0.1680))]),
        ("Depth Pro", [Some((0.9858, 0.1557)), Some((0.3888, 0.3772)), Some((3.2185, 0.1678))]),
        ("UW-Depth", [None, None, Some((0.4948, 0.3446))]),
        ("Depth Anything V2 (ViT-S)", [Some((0.3576, 0.4463)), Some((0.2569, 0.4722)), Some((0.5242, 0.2054))]),
        ("Depth Anything V2 (ViT-B)", [Some((0.2447, 0.5696)), Some((0.2471, 0.4301)), Some((0.4495, 0.2649))]),
        ("Depth Anything V2 (ViT-L)", [Some((0.2269, 0.6363)), Some((0.2307, 0.4812)), Some((0.3390, 0.2896))]),
        ("UniDepth V2 (ViT-S)", [Some((0.2233, 0.6763)), Some((0.1524, 0.8122)), Some((0.4012, 0.4789))]),
        ("UniDepth V2 (ViT-B)", [Some((0.1276, 0.8844)), Some((0.1045, 0.9167)), Some((0.3638, 0.4725))]),
        ("UniDepth V2 (ViT-L)", [Some((0.1156, 0.9109)), Some((0.0932, 0.9439)), Some((0.3222, 0.5201))]),
    ]);
    let md = emit_table(&s, TableFormat::Markdown).unwrap();
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[5], "| UW-Depth | -- | -- | -- | -- | 0.4948 | 0.3446 |");
    assert_eq!(lines[4], "| Depth Pro | 0.9858 | 0.1557 | 0.3888 | 0.3772 | 3.2185 | 0.1678 |");
    assert_eq!(
        lines[11],
        "| UniDepth V2 (ViT-L) | **0.1156** | **0.9109** | **0.0932** | **0.9439** | **0.3222** | **0.5201** |"
    );
    assert_eq!(md.matches("**").count(), 12);
}

#[test]
fn fine_tuning_table_splits_bold() {
    let s = rows_to_summaries(&[
        ("Baseline DA V2", [Some((0.3576, 0.4463)), Some((0.2569, 0.4722)), Some((0.5242, 0.2054))]),
        ("Fine-tuned DA V2 (Ours)", [Some((0.3620, 0.4683)), Some((0.2266, 0.6170)), Some((0.4465, 0.3204))]),
    ]);
    let md = emit_table(&s, TableFormat::Markdown).unwrap();
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines[2], "| Baseline DA V2 | **0.3576** | 0.4463 | 0.2569 | 0.4722 | 0.5242 | 0.2054 |");
    assert_eq!(
        lines[3],
        "| Fine-tuned DA V2 (Ours) | 0.3620 | **0.4683** | **0.2266** | **0.6170** | **0.4465** | **0.3204** |"
    );
}

#[test]
fn csv_and_markdown_carry_the_same_numbers() {
    let s = rows_to_summaries(&[
        ("A", [Some((0.123456, 0.5)), None, Some((2.0, 0.0))]),
        ("B", [Some((0.2, 0.75)), Some((0.3, 0.25)), None]),
    ]);
    let md = emit_table(&s, TableFormat::Markdown).unwrap();
    let csv = emit_table(&s, TableFormat::Csv).unwrap();
    let numbers = |text: &str| -> Vec<String> {
        text.lines()
            .skip(1)
            .flat_map(|l| l.split(['|', ',']).map(|c| c.trim().trim_matches('*').to_string()).collect::<Vec<_>>())
            .filter(|c| c.parse::<f64>().is_ok() || c == "--")
            .collect()
    };
    assert_eq!(numbers(&md), numbers(&csv));
    assert_eq!(csv.lines().next().unwrap(), "model,FLSea-Canyon AbsRel,FLSea-Canyon delta1,FLSea-Red Sea AbsRel,FLSea-Red Sea delta1,SQUID AbsRel,SQUID delta1");
}

#[test]
fn unknown_datasets_follow_first_appearance() {
    let mk = |model: &str, dataset: &str| DatasetSummary {
        model: Some(model.into()),
        dataset: Some(dataset.into()),
        pooling: Pooling::PerPixel,
        image_count: 2,
        excluded_images: 0,
        valid_pixels: 10,
        abs_rel: 0.1,
        delta: vec![0.9],
        delta_thresholds: vec![1.25],
        silog: 0.01,
    };
    let t = BenchmarkTable::from_summaries(&[mk("m", "Zeta"), mk("m", "SQUID"), mk("n", "Alpha")]).unwrap();
    assert_eq!(t.datasets, ["SQUID", "Zeta", "Alpha"]);
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[1].cells[0], [None, None]);
}
