use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use divlex::chargegraph::{build_graph, ReversalMatrix};
use divlex::corpus::{generate_synthetic, GeneratorConfig};
use divlex::features::{FeatureConfig, FeatureExtractor, FeatureStore};
use divlex::predictor::{ChargePredictor, KeywordPredictor, PredictorError};
use divlex::sidecar::{SidecarClient, SidecarConfig, SidecarError, SIDECAR_URL_ENV};
use divlex::textsim::{EmbeddingProvider, HashEmbedder};
use divlex::Exec;

#[derive(Clone, Copy, PartialEq)]
enum Fault {
    None,
    Loading,
    EmbedDown,
    WrongDim,
    ShortPrediction,
    Unsorted,
}

struct Mock {
    embedder: HashEmbedder,
    predictor: KeywordPredictor,
    vocab_size: usize,
    fault: Fault,
    embed_calls: AtomicUsize,
}

struct Server {
    url: String,
    mock: Arc<Mock>,
}

fn serve(predictor: KeywordPredictor, vocab_size: usize, fault: Fault) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let mock = Arc::new(Mock { embedder: HashEmbedder::default(), predictor, vocab_size, fault, embed_calls: AtomicUsize::new(0) });
    let m = Arc::clone(&mock);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let m = Arc::clone(&m);
            thread::spawn(move || handle(stream, &m));
        }
    });
    Server { url, mock }
}

fn handle(stream: TcpStream, mock: &Mock) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let mut content_length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body).unwrap();
    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let (status, payload) = route(mock, method, path, &body);
    let text = payload.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )
    .unwrap();
}

fn route(mock: &Mock, method: &str, path: &str, body: &[u8]) -> (u16, Value) {
    match (method, path) {
        ("GET", "/health") => {
            let status = if mock.fault == Fault::Loading { "loading" } else { "ready" };
            (200, json!({"status": status, "dim": mock.embedder.dim(), "vocab_size": mock.vocab_size}))
        }
        ("POST", "/embed") => {
            mock.embed_calls.fetch_add(1, Ordering::SeqCst);
            if mock.fault == Fault::EmbedDown {
                return (503, json!({"error": "model not loaded"}));
            }
            let req: Value = serde_json::from_slice(body).unwrap();
            let texts: Vec<String> = serde_json::from_value(req["texts"].clone()).unwrap();
            if texts.is_empty() {
                return (400, json!({"error": "empty"}));
            }
            let mut vectors = mock.embedder.embed(&texts).unwrap();
            if mock.fault == Fault::WrongDim {
                vectors[0].pop();
            }
            (200, json!({"dim": mock.embedder.dim(), "vectors": vectors}))
        }
        ("POST", "/predict_charges") => {
            let req: Value = serde_json::from_slice(body).unwrap();
            let text = req["text"].as_str().unwrap_or("");
            if text.is_empty() {
                return (400, json!({"error": "empty"}));
            }
            let mut charges = mock.predictor.predict(text).unwrap();
            match mock.fault {
                Fault::ShortPrediction => charges.truncate(3),
                Fault::Unsorted => charges.reverse(),
                _ => {}
            }
            (200, json!({"charges": charges}))
        }
        _ => (404, json!({"error": "not found"})),
    }
}

fn small() -> GeneratorConfig {
    GeneratorConfig { num_charges: 12, train_queries: 4, test_queries: 2, docs_per_query: 6, ..Default::default() }
}

fn setup(fault: Fault) -> (divlex::Dataset, Server) {
    let ds = generate_synthetic(&small(), 3).unwrap();
    let server = serve(KeywordPredictor::new(&ds.vocab), ds.vocab.len(), fault);
    (ds, server)
}

fn connect(server: &Server, vocab: usize) -> Result<SidecarClient, SidecarError> {
    SidecarClient::connect(&SidecarConfig::new(&server.url), vocab)
}

#[test]
fn health_advertises_dimensions() {
    let (ds, server) = setup(Fault::None);
    let client = connect(&server, ds.vocab.len()).unwrap();
    let h = client.health().unwrap();
    assert_eq!(h.status, "ready");
    assert_eq!(h.dim, 128);
    assert_eq!(h.vocab_size, ds.vocab.len());
    assert_eq!(client.dim(), 128);
}

#[test]
fn embeddings_match_the_builtin_embedder_across_batches() {
    let (ds, server) = setup(Fault::None);
    let mut cfg = SidecarConfig::new(format!("{}/", server.url));
    cfg.batch_size = 2;
    let client = SidecarClient::connect(&cfg, ds.vocab.len()).unwrap();
    let texts: Vec<String> = ds.docs.iter().take(5).map(|d| d.text()).collect();
    let got = client.embed(&texts).unwrap();
    assert_eq!(server.mock.embed_calls.load(Ordering::SeqCst), 3);
    assert_eq!(got, HashEmbedder::default().embed(&texts).unwrap());

    let same = client.embed(&["a".to_string(), "a".to_string()]).unwrap();
    assert_eq!(same[0], same[1]);
    let empty = client.embed(&[String::new()]).unwrap();
    assert_eq!(empty[0].len(), 128);
}

#[test]
fn predictions_are_sorted_deterministic_and_find_doc_charges() {
    let (ds, server) = setup(Fault::None);
    let client = connect(&server, ds.vocab.len()).unwrap();
    for d in &ds.docs {
        let a = ChargePredictor::predict(&client, &d.text()).unwrap();
        assert!(a.len() >= 5);
        assert!(a.windows(2).all(|w| w[0].prob >= w[1].prob));
        assert_eq!(a, ChargePredictor::predict(&client, &d.text()).unwrap());
        let top: Vec<_> = a.iter().take(5).map(|s| s.id).collect();
        assert!(d.charges.iter().all(|c| top.contains(c)), "doc {} charges {:?} not in {top:?}", d.id, d.charges);
    }
}

#[test]
fn random_requests_satisfy_the_schema() {
    let (ds, server) = setup(Fault::None);
    let client = connect(&server, ds.vocab.len()).unwrap();
    let words: Vec<String> = ds.docs.iter().flat_map(|d| d.text().split_whitespace().map(String::from).collect::<Vec<_>>()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.random_range(1..6);
        let texts: Vec<String> = (0..n)
            .map(|_| {
                let len = rng.random_range(1..30);
                (0..len).map(|_| words[rng.random_range(0..words.len())].as_str()).collect::<Vec<_>>().join(" ")
            })
            .collect();
        let vectors = client.embed_texts(&texts).unwrap();
        assert_eq!(vectors.len(), texts.len());
        for v in &vectors {
            assert_eq!(v.len(), 128);
            let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-4);
        }
        let charges = client.predict_charges(&texts[0]).unwrap();
        assert!(charges.len() >= 5);
        assert!(charges.iter().all(|c| (0.0..=1.0).contains(&c.prob) && c.id < ds.vocab.len()));
    }
}

#[test]
fn features_through_the_sidecar_equal_builtin_features() {
    let (ds, server) = setup(Fault::None);
    let client = connect(&server, ds.vocab.len()).unwrap();
    let g = ReversalMatrix::from_reversals(ds.vocab.len(), &ds.reversals).unwrap();
    let graph = build_graph(&g, 0.4).unwrap();
    let emb = HashEmbedder::default();
    let pred = KeywordPredictor::new(&ds.vocab);
    let local = FeatureExtractor { provider: &emb, predictor: &pred, graph: &graph, config: FeatureConfig::default() };
    let remote = FeatureExtractor { provider: &client, predictor: &client, graph: &graph, config: FeatureConfig::default() };
    let a = FeatureStore::build(&ds, &local, Exec::Sequential).unwrap();
    let b = FeatureStore::build(&ds, &remote, Exec::Parallel).unwrap();
    for q in &ds.queries {
        assert_eq!(a.query(&q.id).unwrap(), b.query(&q.id).unwrap());
    }
    for d in &ds.docs {
        assert_eq!(a.pair(&d.query_id, &d.id).unwrap(), b.pair(&d.query_id, &d.id).unwrap());
    }
}

#[test]
fn faults_are_reported() {
    let (ds, server) = setup(Fault::Loading);
    assert!(matches!(connect(&server, ds.vocab.len()), Err(SidecarError::NotReady(s)) if s == "loading"));

    let (ds, server) = setup(Fault::None);
    assert!(matches!(
        connect(&server, ds.vocab.len() + 1),
        Err(SidecarError::VocabMismatch { service, .. }) if service == ds.vocab.len()
    ));

    let (ds, server) = setup(Fault::EmbedDown);
    let client = connect(&server, ds.vocab.len()).unwrap();
    assert!(matches!(client.embed_texts(&["x".into()]), Err(SidecarError::Status { status: 503, .. })));

    let (ds, server) = setup(Fault::WrongDim);
    let client = connect(&server, ds.vocab.len()).unwrap();
    assert!(matches!(client.embed_texts(&["x".into()]), Err(SidecarError::Contract(_))));

    let (ds, server) = setup(Fault::ShortPrediction);
    let client = connect(&server, ds.vocab.len()).unwrap();
    assert!(matches!(ChargePredictor::predict(&client, "text"), Err(PredictorError::Contract(_))));

    let (ds, server) = setup(Fault::Unsorted);
    let client = connect(&server, ds.vocab.len()).unwrap();
    assert!(matches!(client.predict_charges(&ds.docs[0].text()), Err(SidecarError::Contract(_))));
    assert!(matches!(client.predict_charges(""), Err(SidecarError::Status { status: 400, .. })));
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    assert!(matches!(SidecarClient::connect(&SidecarConfig::new(url), 3), Err(SidecarError::Transport { .. })));
}

#[test]
fn url_comes_from_the_environment() {
    std::env::set_var(SIDECAR_URL_ENV, "http://127.0.0.1:9/");
    assert_eq!(SidecarConfig::from_env().unwrap().url, "http://127.0.0.1:9/");
    std::env::set_var(SIDECAR_URL_ENV, "  ");
    assert!(SidecarConfig::from_env().is_none());
    std::env::remove_var(SIDECAR_URL_ENV);
    assert!(SidecarConfig::from_env().is_none());
}
