//! Golden prompt files. Set `CTT_BLESS=1` to rewrite them after an
//! intentional format change.

mod common;

use std::fs;

use common::goldens;

#[test]
fn prompts_match_their_golden_files() {
    let bless = std::env::var_os("CTT_BLESS").is_some();
    for (name, prompt) in goldens::scenarios() {
        let path = goldens::dir().join(format!("{name}.json"));
        let json = prompt.to_json();
        if bless {
            fs::create_dir_all(goldens::dir()).unwrap();
            fs::write(&path, &json).unwrap();
            continue;
        }
        let golden = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(json, golden, "{name} drifted from its golden file");
    }
}

#[test]
fn minimal_golden_is_exactly_the_mandatory_blocks() {
    let expected = concat!(
        r#"{"context":{"snippets":[],"summary":"retrieved context for src/a.swift:1"},"history":[],"#,
        r#""question":{"task":"detect_bugs","focus_path":"src/a.swift","focus_line":1,"#,
        r#""instruction":"Identify defects in the provided context; respond in the response JSON schema."},"#,
        r#""config":{"model":"mock","temperature":0.2,"mode":"testing","max_tokens":1024}}"#
    );
    let golden = fs::read_to_string(goldens::dir().join("minimal.json")).unwrap();
    assert_eq!(golden, expected);
}
