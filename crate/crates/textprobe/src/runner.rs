//! Experiment orchestration: enumerate sample x model tasks, execute them
//! with bounded concurrency, score completions, and persist results.
//!
//! Every task has a deterministic request id; tasks whose id already appears
//! in the store are skipped, so interrupted runs resume where they stopped.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{segment, CorpusError, Document, SegmentationConfig, TextType};
use crate::provider::{request_id, CompletionProvider, GenerationParams};
use crate::scoring::{rouge_l, ScoringError};
use crate::store::{
    read_store, FailureRecord, ProbeResult, StoreError, StoreRecord, StoreWriter, STORE_FILE,
};
use crate::RougeConfig;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A fully resolved experiment: documents, providers, models, and knobs.
#[derive(Clone)]
pub struct Experiment {
    pub docs: Vec<Document>,
    pub segmentation: SegmentationConfig,
    pub providers: BTreeMap<String, Arc<dyn CompletionProvider>>,
    /// (provider_name, model_id) pairs to probe.
    pub models: Vec<(String, String)>,
    /// Parameter defaults; `model` is filled in per task.
    pub params: GenerationParams,
    pub max_tokens_sweep: Option<Vec<u32>>,
    pub rouge: RougeConfig,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_tasks: usize,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub skipped: usize,
    pub store_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

struct Task {
    idx: usize,
    doc_id: String,
    sample_index: usize,
    text_type: TextType,
    start_word: usize,
    prefix_text: String,
    reference_text: String,
    provider_name: String,
    params: GenerationParams,
    request_id: String,
}

impl Experiment {
    fn validate(&self) -> Result<(), RunnerError> {
        if self.docs.is_empty() {
            return Err(RunnerError::InvalidConfig("corpus is empty".into()));
        }
        if self.models.is_empty() {
            return Err(RunnerError::InvalidConfig("no models configured".into()));
        }
        for (provider, model) in &self.models {
            if !self.providers.contains_key(provider) {
                return Err(RunnerError::InvalidConfig(format!(
                    "model {model} references undeclared provider {provider}"
                )));
            }
        }
        if self.parallelism == 0 {
            return Err(RunnerError::InvalidConfig("parallelism must be >= 1".into()));
        }
        self.params
            .validate()
            .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
        self.rouge
            .validate()
            .map_err(RunnerError::InvalidConfig)?;
        self.segmentation
            .validate()
            .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
        if let Some(sweep) = &self.max_tokens_sweep {
            let distinct: HashSet<_> = sweep.iter().collect();
            if sweep.is_empty() || distinct.len() != sweep.len() || sweep.contains(&0) {
                return Err(RunnerError::InvalidConfig(
                    "max_tokens_sweep values must be distinct and positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn store_path(&self) -> PathBuf {
        self.output_dir.join(STORE_FILE)
    }

    fn build_tasks(&self) -> Result<Vec<Task>, RunnerError> {
        let mut tasks = Vec::new();
        let mut idx = 0usize;
        for doc in &self.docs {
            let samples = segment(doc, &self.segmentation)?;
            for sample in &samples {
                for (provider_name, model_id) in &self.models {
                    let params = GenerationParams {
                        model: model_id.clone(),
                        ..self.params.clone()
                    };
                    let prefix_text = sample.prefix_text();
                    let prompt_text = params.render_prompt(&prefix_text);
                    tasks.push(Task {
                        idx,
                        doc_id: doc.id.clone(),
                        sample_index: sample.index,
                        text_type: doc.text_type,
                        start_word: sample.start_word,
                        reference_text: sample.reference_text(),
                        request_id: request_id(provider_name, &params, &prompt_text),
                        prefix_text,
                        provider_name: provider_name.clone(),
                        params,
                    });
                    idx += 1;
                }
            }
        }
        Ok(tasks)
    }
}

/// Run one probing pass: every sample x model gets exactly one stored result
/// or one recorded failure. Already-stored request ids are skipped.
pub fn run_probe(exp: &Experiment) -> Result<RunSummary, RunnerError> {
    exp.validate()?;
    std::fs::create_dir_all(&exp.output_dir).map_err(|source| RunnerError::Io {
        path: exp.output_dir.display().to_string(),
        source,
    })?;
    let store_path = exp.store_path();

    let tasks = exp.build_tasks()?;
    let total_tasks = tasks.len();

    let done: HashSet<String> = read_store(&store_path)?
        .into_iter()
        .filter_map(|r| match r {
            StoreRecord::Probe(p) => Some(p.completion.request_id),
            _ => None,
        })
        .collect();
    let (pending, skipped): (Vec<Task>, Vec<Task>) = tasks
        .into_iter()
        .partition(|t| !done.contains(&t.request_id));
    let skipped = skipped.len();
    let attempted = pending.len();

    let mut writer = StoreWriter::append(&store_path)?;
    let (succeeded, failed) = execute(exp, pending, &mut writer)?;

    let summary = RunSummary {
        total_tasks,
        attempted,
        succeeded,
        failed,
        skipped,
        store_path: store_path.display().to_string(),
        max_tokens: None,
    };
    write_summary(&exp.output_dir.join("run_summary.json"), &summary)?;
    Ok(summary)
}

/// Run the max_tokens sweep: one probe pass per sweep value, all else equal.
///
/// Each pass re-segments with sample_len = prefix_len + max_tokens so the
/// held-out reference always matches the output budget; with a fixed
/// reference, recall is monotone in candidate length and a sweep could never
/// show the decline it is meant to measure.
pub fn sweep_max_tokens(exp: &Experiment) -> Result<Vec<RunSummary>, RunnerError> {
    exp.validate()?;
    let sweep = exp
        .max_tokens_sweep
        .clone()
        .ok_or_else(|| RunnerError::InvalidConfig("max_tokens_sweep is not set".into()))?;

    let mut summaries = Vec::new();
    for max_tokens in sweep {
        let mut pass = exp.clone();
        pass.params.max_tokens = max_tokens;
        let sample_len = exp.segmentation.prefix_len + max_tokens as usize;
        pass.segmentation = SegmentationConfig {
            sample_len,
            prefix_len: exp.segmentation.prefix_len,
            stride: sample_len,
            max_samples: exp.segmentation.max_samples,
        };
        let mut summary = run_probe(&pass)?;
        summary.max_tokens = Some(max_tokens);
        write_summary(
            &exp.output_dir.join(format!("run_summary_{max_tokens}.json")),
            &summary,
        )?;
        summaries.push(summary);
    }
    write_summary(&exp.output_dir.join("sweep_summary.json"), &summaries)?;
    Ok(summaries)
}

fn write_summary<T: Serialize>(path: &Path, value: &T) -> Result<(), RunnerError> {
    let body = serde_json::to_string_pretty(value).expect("summary serialization");
    std::fs::write(path, body + "\n").map_err(|source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Execute tasks on up to `parallelism` worker threads. Results are written
/// in task order regardless of completion order, so stores are reproducible.
fn execute(
    exp: &Experiment,
    pending: Vec<Task>,
    writer: &mut StoreWriter,
) -> Result<(usize, usize), RunnerError> {
    if pending.is_empty() {
        return Ok((0, 0));
    }
    let workers = exp.parallelism.min(pending.len());
    let order: Vec<usize> = pending.iter().map(|t| t.idx).collect();
    let queue = Arc::new(Mutex::new(VecDeque::from(pending)));
    let (tx, rx) = mpsc::channel::<(usize, StoreRecord, bool)>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let queue = Arc::clone(&queue);
            let tx = tx.clone();
            scope.spawn(|| {
                let tx = tx;
                let queue = queue;
                loop {
                    let task = { queue.lock().unwrap().pop_front() };
                    let Some(task) = task else { break };
                    let record = execute_task(exp, &task);
                    let ok = matches!(record, StoreRecord::Probe(_));
                    if tx.send((task.idx, record, ok)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);

        // reorder: hold completed records until all earlier task ids arrived
        let mut succeeded = 0usize;
        let mut failed = 0usize;
        let mut buffer: BTreeMap<usize, StoreRecord> = BTreeMap::new();
        let mut next = 0usize;
        let mut write_err: Option<StoreError> = None;
        for (idx, record, ok) in rx {
            if ok {
                succeeded += 1;
            } else {
                failed += 1;
            }
            buffer.insert(idx, record);
            while next < order.len() {
                let Some(record) = buffer.remove(&order[next]) else {
                    break;
                };
                if write_err.is_none() {
                    if let Err(e) = writer.write(&record) {
                        write_err = Some(e);
                    }
                }
                next += 1;
            }
        }
        match write_err {
            Some(e) => Err(RunnerError::Store(e)),
            None => Ok((succeeded, failed)),
        }
    })
}

fn execute_task(exp: &Experiment, task: &Task) -> StoreRecord {
    let provider = &exp.providers[&task.provider_name];
    match provider.complete(&task.prefix_text, &task.params) {
        Ok(completion) => {
            match rouge_l(&task.reference_text, &completion.output_text, &exp.rouge) {
                Ok(score) => StoreRecord::Probe(ProbeResult {
                    config_hash: exp.config_hash.clone(),
                    doc_id: task.doc_id.clone(),
                    sample_index: task.sample_index,
                    text_type: task.text_type,
                    start_word: task.start_word,
                    model_id: task.params.model.clone(),
                    provider_name: task.provider_name.clone(),
                    reference_text: task.reference_text.clone(),
                    completion,
                    score,
                }),
                Err(ScoringError::EmptyReference) => failure(exp, task, "reference tokenized to zero tokens"),
            }
        }
        Err(e) => failure(exp, task, &e.to_string()),
    }
}

fn failure(exp: &Experiment, task: &Task, error: &str) -> StoreRecord {
    StoreRecord::Failure(FailureRecord {
        config_hash: exp.config_hash.clone(),
        request_id: task.request_id.clone(),
        doc_id: task.doc_id.clone(),
        sample_index: task.sample_index,
        text_type: task.text_type,
        model_id: task.params.model.clone(),
        provider_name: task.provider_name.clone(),
        error: error.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::document_from_text;
    use crate::provider::{Completion, FinishReason, MemorizerModel, ProviderError};
    use chrono::{TimeZone, Utc};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn fixture_doc(n: usize) -> Document {
        let words: Vec<String> = (0..n).map(|i| format!("word{i}")).collect();
        document_from_text(words.join(" "), TextType::Novel, "fixture", "mem").unwrap()
    }

    fn memorizer_experiment(dir: &Path, fidelity: f64) -> Experiment {
        let doc = fixture_doc(1000);
        let model = MemorizerModel::new("mem", doc.words.clone(), 8, fidelity, None, 17);
        let mut providers: BTreeMap<String, Arc<dyn CompletionProvider>> = BTreeMap::new();
        providers.insert("mem".into(), Arc::new(model));
        Experiment {
            docs: vec![doc],
            segmentation: SegmentationConfig::default(),
            providers,
            models: vec![("mem".into(), "memorizer".into())],
            params: GenerationParams {
                max_tokens: 30,
                ..Default::default()
            },
            max_tokens_sweep: None,
            rouge: RougeConfig::default(),
            output_dir: dir.to_path_buf(),
            parallelism: 4,
            config_hash: "testhash".into(),
        }
    }

    /// Stub provider that counts calls and tracks peak concurrency.
    struct CountingProvider {
        calls: AtomicUsize,
        in_flight: AtomicUsize,
        peak: AtomicUsize,
        delay: std::time::Duration,
        fail_from_call: Option<usize>,
    }

    impl CountingProvider {
        fn new(delay_ms: u64) -> Self {
            CountingProvider {
                calls: AtomicUsize::new(0),
                in_flight: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
                delay: std::time::Duration::from_millis(delay_ms),
                fail_from_call: None,
            }
        }
    }

    impl CompletionProvider for CountingProvider {
        fn name(&self) -> &str {
            "stub"
        }
        fn complete(
            &self,
            prefix_text: &str,
            params: &GenerationParams,
        ) -> Result<Completion, ProviderError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(self.delay);
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            if self.fail_from_call.is_some_and(|n| call >= n) {
                return Err(ProviderError::Timeout {
                    provider: "stub".into(),
                });
            }
            let prompt_text = params.render_prompt(prefix_text);
            Ok(Completion {
                request_id: request_id("stub", params, &prompt_text),
                params: params.clone(),
                prompt_text,
                output_text: "fixed output".into(),
                provider_name: "stub".into(),
                latency_ms: 0,
                finish_reason: FinishReason::Stop,
                timestamp: Utc.timestamp_opt(0, 0).unwrap(),
            })
        }
    }

    fn stub_experiment(dir: &Path, stub: Arc<CountingProvider>, max_samples: usize) -> Experiment {
        let doc = fixture_doc(1000);
        let mut providers: BTreeMap<String, Arc<dyn CompletionProvider>> = BTreeMap::new();
        providers.insert("stub".into(), stub);
        Experiment {
            docs: vec![doc],
            segmentation: SegmentationConfig {
                max_samples: Some(max_samples),
                ..Default::default()
            },
            providers,
            models: vec![("stub".into(), "stub-model".into())],
            params: GenerationParams::default(),
            max_tokens_sweep: None,
            rouge: RougeConfig::default(),
            output_dir: dir.to_path_buf(),
            parallelism: 3,
            config_hash: "stubhash".into(),
        }
    }

    #[test]
    fn perfect_memorizer_scores_one_everywhere() {
        let dir = tempfile::tempdir().unwrap();
        let exp = memorizer_experiment(dir.path(), 1.0);
        let summary = run_probe(&exp).unwrap();
        assert_eq!(summary.total_tasks, 20);
        assert_eq!(summary.succeeded, 20);
        assert_eq!(summary.failed, 0);
        let records = read_store(&exp.store_path()).unwrap();
        let probes: Vec<_> = records
            .iter()
            .filter_map(|r| match r {
                StoreRecord::Probe(p) => Some(p),
                _ => None,
            })
            .collect();
        assert_eq!(probes.len(), 20);
        for p in &probes {
            assert_eq!(p.score.recall, 1.0);
            // m is the reference token count under the rouge config
            let ref_tokens = crate::scoring::score_tokenize(&p.reference_text, &exp.rouge);
            assert_eq!(p.score.m, ref_tokens.len());
        }
    }

    #[test]
    fn stored_scores_are_recomputable() {
        let dir = tempfile::tempdir().unwrap();
        let exp = memorizer_experiment(dir.path(), 0.5);
        run_probe(&exp).unwrap();
        for record in read_store(&exp.store_path()).unwrap() {
            if let StoreRecord::Probe(p) = record {
                let again =
                    rouge_l(&p.reference_text, &p.completion.output_text, &exp.rouge).unwrap();
                assert_eq!(again, p.score);
            }
        }
    }

    #[test]
    fn rerun_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let stub = Arc::new(CountingProvider::new(0));
        let exp = stub_experiment(dir.path(), stub.clone(), 20);
        let first = run_probe(&exp).unwrap();
        assert_eq!(first.attempted, 20);
        assert_eq!(stub.calls.load(Ordering::SeqCst), 20);
        let second = run_probe(&exp).unwrap();
        assert_eq!(second.skipped, 20);
        assert_eq!(second.attempted, 0);
        assert_eq!(stub.calls.load(Ordering::SeqCst), 20, "no new provider calls");
    }

    #[test]
    fn resume_after_interruption_issues_only_missing_requests() {
        let dir = tempfile::tempdir().unwrap();
        // first pass sees only the first 10 samples, standing in for a run
        // interrupted at 10/20
        let stub = Arc::new(CountingProvider::new(0));
        let exp10 = stub_experiment(dir.path(), stub.clone(), 10);
        run_probe(&exp10).unwrap();
        assert_eq!(stub.calls.load(Ordering::SeqCst), 10);

        let exp20 = stub_experiment(dir.path(), stub.clone(), 20);
        let summary = run_probe(&exp20).unwrap();
        assert_eq!(summary.skipped, 10);
        assert_eq!(summary.attempted, 10);
        assert_eq!(stub.calls.load(Ordering::SeqCst), 20);
    }

    #[test]
    fn parallelism_cap_is_respected() {
        let dir = tempfile::tempdir().unwrap();
        let stub = Arc::new(CountingProvider::new(15));
        let exp = stub_experiment(dir.path(), stub.clone(), 20);
        run_probe(&exp).unwrap();
        let peak = stub.peak.load(Ordering::SeqCst);
        assert!(peak <= 3, "peak concurrency {peak} exceeds parallelism 3");
        assert!(peak >= 2, "tasks never overlapped; cap untestable");
    }

    #[test]
    fn failures_are_recorded_per_task_and_nonfatal() {
        let dir = tempfile::tempdir().unwrap();
        let stub = Arc::new(CountingProvider {
            fail_from_call: Some(5),
            ..CountingProvider::new(0)
        });
        let exp = stub_experiment(dir.path(), stub, 20);
        let summary = run_probe(&exp).unwrap();
        assert_eq!(summary.succeeded, 5);
        assert_eq!(summary.failed, 15);
        let records = read_store(&exp.store_path()).unwrap();
        assert_eq!(records.len(), 20);
        let failures = records
            .iter()
            .filter(|r| matches!(r, StoreRecord::Failure(_)))
            .count();
        assert_eq!(failures, 15);
    }

    #[test]
    fn store_order_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let exp_a = memorizer_experiment(dir_a.path(), 0.5);
        let exp_b = memorizer_experiment(dir_b.path(), 0.5);
        run_probe(&exp_a).unwrap();
        run_probe(&exp_b).unwrap();
        let a = std::fs::read(exp_a.store_path()).unwrap();
        let b = std::fs::read(exp_b.store_path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_validation_and_tagging() {
        let dir = tempfile::tempdir().unwrap();
        let mut exp = memorizer_experiment(dir.path(), 1.0);
        exp.max_tokens_sweep = Some(vec![50, 50]);
        assert!(matches!(
            sweep_max_tokens(&exp),
            Err(RunnerError::InvalidConfig(_))
        ));

        exp.max_tokens_sweep = Some(vec![30, 60]);
        exp.segmentation.max_samples = Some(5);
        let summaries = sweep_max_tokens(&exp).unwrap();
        assert_eq!(summaries.len(), 2);
        assert_eq!(summaries[0].max_tokens, Some(30));
        assert_eq!(summaries[1].max_tokens, Some(60));
        // results carry their max_tokens in the params snapshot
        let records = read_store(&exp.store_path()).unwrap();
        let mut by_mt: BTreeMap<u32, usize> = BTreeMap::new();
        for r in &records {
            if let StoreRecord::Probe(p) = r {
                *by_mt.entry(p.completion.params.max_tokens).or_default() += 1;
            }
        }
        assert_eq!(by_mt.get(&30), Some(&5));
        assert_eq!(by_mt.get(&60), Some(&5));
    }
}
