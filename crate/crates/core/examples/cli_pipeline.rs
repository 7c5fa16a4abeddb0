// Drive the command-line interface in-process: sample points, build an
// operator, print its spectrum and classify a saddle.

use snn_landscape::cli;

pub fn run_example() -> snn_landscape::Result<()> {
    let dir = std::env::temp_dir().join("snn_landscape_cli_pipeline");
    std::fs::create_dir_all(&dir)?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    let steps: Vec<Vec<String>> = vec![
        vec!["graph", "sample-sphere", "--n", "40", "--seed", "1", "--out", &p("pts.csv")],
        vec!["graph", "build", "--input", &p("pts.csv"), "--rule", "knn", "--k", "6", "--out", &p("an.json")],
        vec!["spectrum", "--operator", &p("an.json"), "--top", "4"],
        vec![
            "landscape",
            "saddles",
            "--operator",
            &p("an.json"),
            "--r",
            "2",
            "--subset",
            "1,3",
            "--out",
            &p("saddles"),
        ],
        vec![
            "landscape",
            "classify",
            "--factor",
            &p("saddles/saddle_1-3.csv"),
            "--operator",
            &p("an.json"),
            "--json",
        ],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect();

    for step in steps {
        println!("$ snn {}", step.join(" "));
        let code = cli::run(std::iter::once("snn".to_string()).chain(step));
        if code != 0 {
            return Err(snn_landscape::Error::Input(format!("command exited with {code}")));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
