//! Acceptance checks. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use docforge_core::docmodel::{parse_annotation, read_corpus, AnnotationDoc, COLUMN_SEPARATOR};
use docforge_core::evalkit::{edit_distance, normalized_edit_distance};
use docforge_core::mathcheck::{check_formulas, formula_filter_doc, EnvironmentInventory, FormulaMode};
use docforge_core::pipeline::{
    aspect_ratio_filter, run_filter_pass, AspectRange, Candidate, FilterKind, FilterReport, PipelineConfig,
    RatioOrientation,
};
use docforge_core::synthgen::SYNTHETIC_CATEGORIES;
use docforge_core::tablecheck::check_table;
use docforge_core::textfilter::{f1, normalize_tokens, Reason};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("f1-oracle-equivalence", f1_oracle),
        ("table-validity-exhaustive-oracle", table_exhaustive),
        ("formula-corpus-and-mutations", formula_corpus),
        ("threshold-and-cascade-monotonicity", monotonicity),
        ("aspect-ratio-examples", aspect_examples),
        ("edit-distance-axioms", edit_axioms),
        ("end-to-end-desk-run", end_to_end),
        ("parallel-serial-equivalence", parallel_serial),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let result = run();
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- F1

/// Precision/recall/F1 by expanding both sides to token lists and matching
/// tokens one at a time.
fn brute_force_f1(pred: &[String], reference: &[String]) -> (f64, f64, f64) {
    let mut unused: Vec<Option<&String>> = reference.iter().map(Some).collect();
    let mut overlap = 0usize;
    for t in pred {
        if let Some(slot) = unused.iter_mut().find(|s| s.is_some_and(|r| r == t)) {
            *slot = None;
            overlap += 1;
        }
    }
    let p = overlap as f64 / pred.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    let f = if overlap == 0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn f1_oracle() -> Check {
    let started = Instant::now();
    let vocab = ["alpha", "Beta", "gamma", "delta", "x1", "état", "42", "Ωmega"];
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let n = rng.random_range(1..30);
            (0..n).map(|_| vocab.choose(rng).unwrap().to_string()).collect()
        };
        let p_words = draw(&mut rng);
        let r_words = draw(&mut rng);
        let lower = |v: &[String]| v.iter().map(|w| w.to_lowercase()).collect::<Vec<_>>();
        let (op, or, of) = brute_force_f1(&lower(&p_words), &lower(&r_words));
        let sep = if i % 2 == 0 { " " } else { " , \n" };
        let s = f1(&normalize_tokens(&p_words.join(sep)), &normalize_tokens(&r_words.join(sep)))
            .map_err(|e| format!("pair {i}: {e:?}"))?;
        for (a, b) in [(s.precision, op), (s.recall, or), (s.f1, of)] {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e} exceeds 1e-12"))?;
    let ms = |v: &[(&str, u64)]| v.iter().map(|(u, c)| (*u, *c)).collect();
    let s = f1(&ms(&[("a", 1), ("b", 2), ("c", 1)]), &ms(&[("a", 1), ("b", 1), ("c", 2)])).unwrap();
    ensure((s.precision, s.recall, s.f1) == (0.75, 0.75, 0.75), || {
        format!("worked example gave {s:?}")
    })?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 pairs, max deviation {worst:e}; worked example 0.75/0.75/0.75"))
}

// ---------------------------------------------------------------- tables

/// Places cells first-fit into an owner map and rejects any overlap, any
/// rowspan past the last row, or any hole in the bounding rectangle.
fn occupancy_oracle(rows: &[Vec<(usize, usize)>]) -> bool {
    let n = rows.len();
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    let mut id = 0;
    for (r, row) in rows.iter().enumerate() {
        let mut c = 0;
        for &(rs, cs) in row {
            while owner.contains_key(&(r, c)) {
                c += 1;
            }
            if r + rs > n {
                return false;
            }
            for dr in 0..rs {
                for dc in 0..cs {
                    if owner.insert((r + dr, c + dc), id).is_some() {
                        return false;
                    }
                }
            }
            id += 1;
            c += cs;
        }
    }
    let width = owner.keys().map(|&(_, c)| c + 1).max().unwrap_or(0);
    (0..n).all(|r| (0..width).all(|c| owner.contains_key(&(r, c))))
}

fn table_html(rows: &[Vec<(usize, usize)>]) -> String {
    let mut s = String::from("<table>");
    for row in rows {
        s.push_str("<tr>");
        for (i, (rs, cs)) in row.iter().enumerate() {
            s.push_str(&format!("<td rowspan=\"{rs}\" colspan=\"{cs}\">c{i}</td>"));
        }
        s.push_str("</tr>");
    }
    s.push_str("</table>");
    s
}

fn all_rows() -> Vec<Vec<(usize, usize)>> {
    let spans = [(1, 1), (1, 2), (2, 1), (2, 2)];
    let mut rows: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut frontier: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for _ in 0..3 {
        frontier = frontier
            .iter()
            .flat_map(|row| {
                spans.iter().map(move |s| {
                    let mut r = row.clone();
                    r.push(*s);
                    r
                })
            })
            .collect();
        rows.extend(frontier.iter().cloned());
    }
    rows
}

fn table_exhaustive() -> Check {
    let started = Instant::now();
    let row_shapes = all_rows();
    let mut tables: Vec<Vec<Vec<(usize, usize)>>> = row_shapes.iter().map(|r| vec![r.clone()]).collect();
    let mut two = Vec::new();
    for a in &row_shapes {
        for b in &row_shapes {
            two.push(vec![a.clone(), b.clone()]);
        }
    }
    let mut three = Vec::new();
    for t in &two {
        for c in &row_shapes {
            let mut x = t.clone();
            x.push(c.clone());
            three.push(x);
        }
    }
    tables.extend(two);
    tables.extend(three);
    let mut valid = 0usize;
    for t in &tables {
        let expected = occupancy_oracle(t);
        let got = check_table(&table_html(t)).valid;
        ensure(expected == got, || {
            format!("disagreement on {}: oracle {expected}, checker {got}", table_html(t))
        })?;
        valid += usize::from(got);
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{} tables agree ({valid} valid)", tables.len()))
}

// ---------------------------------------------------------------- formulas

fn example_section(template: &str) -> &str {
    let marker = template
        .find("Example:\n")
        .map(|i| i + "Example:\n".len())
        .or_else(|| template.find("Here is an example:\n").map(|i| i + "Here is an example:\n".len()))
        .expect("template carries an example");
    &template[marker..]
}

fn prompt_resource(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/resources/prompts").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn formula_corpus() -> Check {
    let inv = EnvironmentInventory::default();
    let mut corpus = Vec::new();
    for name in ["formula.txt", "multicolumn.txt"] {
        let text = prompt_resource(name);
        let doc = parse_annotation(example_section(&text));
        corpus.extend(check_formulas(&doc, &inv));
    }
    let display = corpus.iter().filter(|f| f.mode == FormulaMode::Display).count();
    ensure(display == 7 && corpus.len() >= 25, || {
        format!("expected 7 display formulas and at least 25 in all, found {display}/{}", corpus.len())
    })?;
    for f in &corpus {
        let ok = f.verdict.as_ref().is_some_and(|v| v.valid);
        ensure(ok, || format!("example formula rejected: {} {:?}", f.source, f.verdict))?;
    }
    let mut mutants = Vec::new();
    let wrap = |mode: FormulaMode, body: &str| match mode {
        FormulaMode::Inline => format!("${body}$"),
        FormulaMode::Display => format!("$${body}$$"),
    };
    for f in &corpus {
        for (i, _) in f.source.match_indices('}') {
            let mut m = f.source.clone();
            m.remove(i);
            mutants.push(wrap(f.mode, &m));
        }
        for (i, _) in f.source.match_indices("\\end{") {
            let close = i + f.source[i..].find('}').unwrap();
            let mut m = f.source.clone();
            m.insert(close, 'z');
            mutants.push(wrap(f.mode, &m));
        }
    }
    for m in &mutants {
        let doc = AnnotationDoc::parse(m.as_str());
        let formulas = check_formulas(&doc, &inv);
        let rejected = !formulas.is_empty() && !formula_filter_doc("m", &doc, &inv).is_retained();
        ensure(rejected, || format!("mutation accepted: {m}"))?;
    }
    Ok(format!("{} example formulas valid, {} mutations rejected", corpus.len(), mutants.len()))
}

// ---------------------------------------------------------------- fixture corpus

const WORDS: [&str; 24] = [
    "river", "stone", "signal", "market", "orbit", "cell", "vector", "grain", "harbor", "lamp", "field", "ledger",
    "prism", "canyon", "motor", "thread", "copper", "season", "valley", "engine", "paper", "garden", "bridge", "cloud",
];

fn fixture_corpus(n: usize) -> (Vec<Candidate>, HashMap<String, String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut cands = Vec::new();
    let mut refs = HashMap::new();
    for i in 0..n {
        let len = rng.random_range(8..24);
        let base: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
        let mut pred = base.clone();
        for _ in 0..rng.random_range(0..4) {
            let k = rng.random_range(0..pred.len());
            pred[k] = "noise";
        }
        let mut text = pred.join(" ");
        match rng.random_range(0..6) {
            0 => text.push_str("\n\n<table><tr><td>a</td><td>b</td></tr></table>"),
            1 => text.push_str("\n\n<table><tr><td colspan=\"2\">a</td></tr><tr><td>b</td></tr></table>"),
            2 => text.push_str(" with $\\frac{a}{b}$ inline"),
            3 => text.push_str("\n\n$$\\begin{pmatrix} a & b \\end{pmatrix$$"),
            _ => {}
        }
        let id = format!("fx-{i:03}");
        let mut line = serde_json::json!({"sample_id": id, "prediction_text": text});
        if rng.random_bool(0.5) {
            let h = *[1414u32, 3000, 300, 1000, 2500].choose(&mut rng).unwrap();
            line["width_px"] = 1000.into();
            line["height_px"] = h.into();
        }
        cands.push(serde_json::from_value(line).expect("fixture line"));
        refs.insert(id, base.join(" "));
    }
    (cands, refs)
}

fn retained_set(cfg: &PipelineConfig, cands: &[Candidate], refs: &HashMap<String, String>) -> BTreeSet<String> {
    let (retained, _) = run_filter_pass(cands, refs, cfg, &EnvironmentInventory::default()).unwrap();
    retained.into_iter().map(|c| c.sample_id).collect()
}

fn monotonicity() -> Check {
    let (cands, refs) = fixture_corpus(200);
    let at = |t: f64| PipelineConfig {
        f1_threshold: t,
        ..PipelineConfig::default()
    };
    let strict = retained_set(&at(0.95), &cands, &refs);
    let loose = retained_set(&at(0.90), &cands, &refs);
    ensure(strict.is_subset(&loose), || "retained(0.95) is not within retained(0.90)".into())?;
    let only_text = PipelineConfig {
        filter_order: vec![FilterKind::Text],
        aspect_filter: false,
        ..PipelineConfig::default()
    };
    let full = PipelineConfig {
        filter_order: vec![FilterKind::Text, FilterKind::Table, FilterKind::Formula],
        aspect_filter: false,
        ..PipelineConfig::default()
    };
    let text = retained_set(&only_text, &cands, &refs);
    let cascade = retained_set(&full, &cands, &refs);
    ensure(cascade.is_subset(&text), || "cascade retained a sample the text filter dropped".into())?;
    ensure(strict.len() < loose.len() && cascade.len() < text.len(), || {
        "fixture does not exercise the thresholds".into()
    })?;
    Ok(format!(
        "tau 0.95: {} within tau 0.90: {}; text+table+formula: {} within text: {}",
        strict.len(),
        loose.len(),
        cascade.len(),
        text.len()
    ))
}

fn aspect_examples() -> Check {
    let range = AspectRange { lo: 2.0 / 5.0, hi: 5.0 / 2.0 };
    let o = RatioOrientation::HeightOverWidth;
    let cases = [(1000u32, 1414u32, true), (1000, 3000, false), (1000, 2500, false)];
    for (w, h, keep) in cases {
        let a = aspect_ratio_filter("s", w, h, range, o).map_err(|e| e.to_string())?;
        let b = aspect_ratio_filter("s", w, h, range, o).map_err(|e| e.to_string())?;
        ensure(a == b, || "filter is not deterministic".into())?;
        ensure(a.is_retained() == keep, || format!("ratio {} gave {:?}", h as f64 / w as f64, a.reason))?;
        ensure(keep || a.reason == Reason::AspectRatio, || "wrong discard reason".into())?;
    }
    Ok("1.414 retained; 3.0 and 2.5 discarded".into())
}

// ---------------------------------------------------------------- edit distance

fn memo_levenshtein(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let (ra, rb) = (&a[..a.len() - 1], &b[..b.len() - 1]);
    let sub = memo_levenshtein(ra, rb, memo) + usize::from(a[a.len() - 1] != b[b.len() - 1]);
    let d = sub
        .min(memo_levenshtein(ra, b, memo) + 1)
        .min(memo_levenshtein(a, rb, memo) + 1);
    memo.insert((a.len(), b.len()), d);
    d
}

fn edit_axioms() -> Check {
    let alphabet = ['a', 'b', 'c', 'é', '∑'];
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let gen = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.random_range(0..10);
        (0..n).map(|_| *alphabet.choose(rng).unwrap()).collect()
    };
    for _ in 0..10_000 {
        let (a, b, c) = (gen(&mut rng), gen(&mut rng), gen(&mut rng));
        let ab = edit_distance(&a, &b);
        ensure(edit_distance(&a, &a) == 0, || format!("d({a},{a}) != 0"))?;
        ensure(ab == edit_distance(&b, &a), || format!("asymmetric on {a:?},{b:?}"))?;
        ensure(edit_distance(&a, &c) <= ab + edit_distance(&b, &c), || {
            format!("triangle fails on {a:?},{b:?},{c:?}")
        })?;
        let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let oracle = memo_levenshtein(&ca, &cb, &mut HashMap::new());
        ensure(ab == oracle, || format!("d({a:?},{b:?}) = {ab}, oracle {oracle}"))?;
    }
    ensure(edit_distance("kitten", "sitting") == 3, || "kitten/sitting != 3".into())?;
    let ned = normalized_edit_distance("kitten", "sitting");
    ensure((ned - 3.0 / 7.0).abs() < 1e-15, || format!("NED {ned}"))?;
    Ok("10000 triples satisfy identity, symmetry and triangle inequality; kitten/sitting = 3, NED 3/7".into())
}

// ---------------------------------------------------------------- end to end

fn stub_text(prompt: &str) -> String {
    if prompt.contains(COLUMN_SEPARATOR) {
        format!(
            "# Field Notes\n\nThe first half covers $a^2 + b^2 = c^2$ and **key** results.\n\n\
             $$\n\\begin{{pmatrix}}\n1 & 0 \\\\\n0 & 1\n\\end{{pmatrix}}\n$$\n\n{COLUMN_SEPARATOR}\n\n\
             ## Second Part\n\nThe rate is $\\frac{{dy}}{{dx}}$ near the origin.\n\n\
             Further remarks close the section."
        )
    } else if prompt.contains("LaTeX formulas") {
        "# Signals\n\nA signal $x(t)$ has energy\n\n$$\nE = \\int_{-\\infty}^{\\infty} |x(t)|^2 \\, dt\n$$\n\n\
         and piecewise form\n\n$$\nf(x) = \\begin{cases} 1 & x > 0 \\\\ 0 & \\text{otherwise} \\end{cases}\n$$\n\n\
         - item one\n- item two"
            .into()
    } else {
        "# Harbor Report\n\nShips arrived **early** this season.\n\nThe market opened at dawn and closed late.\n\n\
         Traders noted calm water."
            .into()
    }
}

fn serve(mut stream: TcpStream) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; len];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let req: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    let prompt = req["prompt"].as_str().unwrap_or_default();
    let payload = serde_json::json!({ "text": stub_text(prompt) }).to_string();
    let _ = write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        payload.len(),
        payload
    );
}

fn spawn_stub_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub endpoint");
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            std::thread::spawn(move || serve(stream));
        }
    });
    format!("http://{addr}/generate")
}

fn docforge(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_docforge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("DOCFORGE_API_KEY")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "docforge {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out)
}

struct RunArtifacts {
    corpus_bytes: Vec<u8>,
    digest: String,
}

fn desk_run(root: &Path, endpoint: &str, renderer: &str) -> Result<RunArtifacts, String> {
    let gen_dir = root.join("gen");
    let s = |p: &PathBuf| p.to_string_lossy().into_owned();
    docforge(&[
        "gen", "--category", "all", "--count", "10", "--seed", "7", "--out", &s(&gen_dir), "--endpoint", endpoint,
        "--renderer", renderer,
    ])?;
    let corpus_path = gen_dir.join("corpus.jsonl");
    let corpus = read_corpus(&corpus_path).map_err(|e| e.to_string())?;
    ensure(corpus.len() == 40, || format!("expected 40 samples, got {}", corpus.len()))?;
    for cat in SYNTHETIC_CATEGORIES {
        let n = corpus.iter().filter(|r| r.category == cat).count();
        ensure(n == 10, || format!("{cat:?}: {n} samples"))?;
    }
    let inv = EnvironmentInventory::default();
    let mut references = String::new();
    for r in &corpus {
        let src = r.annotation.source_text();
        ensure(parse_annotation(src).serialize() == src, || format!("{}: round trip", r.sample_id))?;
        for t in r.annotation.tables() {
            ensure(check_table(t).valid, || format!("{}: invalid table", r.sample_id))?;
        }
        for f in check_formulas(&r.annotation, &inv) {
            ensure(f.verdict.is_some_and(|v| v.valid), || format!("{}: invalid formula {}", r.sample_id, f.source))?;
        }
        ensure(r.width_px > 0 && r.height_px > 0, || format!("{}: no dimensions", r.sample_id))?;
        // stand-in for OCR output: the annotation's own plain text
        let line = serde_json::json!({
            "sample_id": r.sample_id,
            "reference_text": r.annotation.plain_text(),
            "engine": "stub",
            "engine_version": "0",
        });
        references.push_str(&format!("{line}\n"));
    }
    let refs_path = root.join("references.jsonl");
    std::fs::write(&refs_path, references).map_err(|e| e.to_string())?;

    let filter_dir = root.join("filtered");
    docforge(&[
        "filter", "--predictions", &s(&corpus_path), "--references", &s(&refs_path), "--out", &s(&filter_dir),
    ])?;
    let report = FilterReport::load(&filter_dir.join("report.json")).map_err(|e| e.to_string())?;
    let discarded: usize = report.discard_breakdown.values().sum();
    ensure(report.input_count == 40 && report.input_count == report.retained_count + discarded, || {
        format!(
            "conservation: input {} retained {} discarded {discarded}",
            report.input_count, report.retained_count
        )
    })?;
    let stats = docforge(&[
        "stats", "--report", &s(&filter_dir.join("report.json")), "--previous", &s(&filter_dir.join("retained.jsonl")),
    ])?;
    let stats: serde_json::Value = serde_json::from_slice(&stats.stdout).map_err(|e| e.to_string())?;
    ensure(stats["retained_total"] == report.retained_count, || format!("stats mismatch: {stats}"))?;
    ensure(stats["retained_ratio_vs_previous"] == 1.0, || format!("retained ratio: {stats}"))?;
    let digest = std::fs::read_to_string(filter_dir.join("digest.txt")).map_err(|e| e.to_string())?;
    Ok(RunArtifacts {
        corpus_bytes: std::fs::read(&corpus_path).map_err(|e| e.to_string())?,
        digest: digest.trim().to_string(),
    })
}

fn end_to_end() -> Check {
    let started = Instant::now();
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let png = work.path().join("page.png");
    image::RgbImage::from_pixel(124, 175, image::Rgb([255, 255, 255]))
        .save(&png)
        .map_err(|e| e.to_string())?;
    let renderer = format!("cp '{}' {{output}}", png.display());
    let endpoint = spawn_stub_endpoint();
    let first = desk_run(&work.path().join("run1"), &endpoint, &renderer)?;
    let second = desk_run(&work.path().join("run2"), &endpoint, &renderer)?;
    ensure(first.corpus_bytes == second.corpus_bytes, || "corpus differs across runs".into())?;
    ensure(first.digest == second.digest, || format!("digest {} vs {}", first.digest, second.digest))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "40 samples generated and validated twice; conservation holds; digest {}",
        &first.digest[..16]
    ))
}

fn parallel_serial() -> Check {
    let (cands, refs) = fixture_corpus(200);
    let inv = EnvironmentInventory::default();
    let run = |n: usize| {
        let cfg = PipelineConfig {
            parallelism: n,
            ..PipelineConfig::default()
        };
        run_filter_pass(&cands, &refs, &cfg, &inv).map_err(|e| e.to_string())
    };
    let (r1, serial) = run(1)?;
    let (r8, parallel) = run(8)?;
    ensure(serial.sorted_by_id() == parallel.sorted_by_id(), || "reports differ".into())?;
    ensure(r1 == r8, || "retained sets differ".into())?;
    let ids: HashSet<_> = r1.iter().map(|c| &c.sample_id).collect();
    Ok(format!("200 samples, {} retained under both", ids.len()))
}
