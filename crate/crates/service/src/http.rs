use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::session::{Engine, Phase, Session, Verdict};
use crate::transcript::{append_feedback, write_events, FeedbackRecord};
use crate::{ItemCard, ServiceError};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Core(gslim::Error::InvalidArgument(_) | gslim::Error::Dimension(_)) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

struct Slot {
    session: Session,
    /// Transcript events already written.
    flushed: usize,
}

struct FeedbackSink {
    out: Box<dyn Write + Send>,
    needs_header: bool,
}

/// Shared state behind the router.
pub struct App {
    engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    transcript: Option<Mutex<Box<dyn Write + Send>>>,
    feedback: Option<Mutex<FeedbackSink>>,
}

fn append_file(path: &Path) -> std::io::Result<(File, bool)> {
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    let empty = f.metadata()?.len() == 0;
    Ok((f, empty))
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl App {
    pub fn new(engine: Arc<Engine>) -> Self {
        App {
            engine,
            sessions: RwLock::new(HashMap::new()),
            transcript: None,
            feedback: None,
        }
    }

    /// Appends session events as JSON lines to `path`.
    pub fn with_transcript(mut self, path: &Path) -> std::io::Result<Self> {
        let (f, _) = append_file(path)?;
        self.transcript = Some(Mutex::new(Box::new(BufWriter::new(f))));
        Ok(self)
    }

    /// Appends feedback lines to the CSV at `path`.
    pub fn with_feedback_log(mut self, path: &Path) -> std::io::Result<Self> {
        let (f, empty) = append_file(path)?;
        self.feedback = Some(Mutex::new(FeedbackSink {
            out: Box::new(BufWriter::new(f)),
            needs_header: empty,
        }));
        Ok(self)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn num_sessions(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ServiceError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session {id:?}")))
    }

    fn persist(&self, slot: &mut Slot) -> Result<(), ServiceError> {
        let events = &slot.session.transcript()[slot.flushed..];
        if let Some(t) = &self.transcript {
            write_events(&mut *t.lock().unwrap(), events)?;
        }
        slot.flushed = slot.session.transcript().len();
        Ok(())
    }

    fn card(&self, item: usize) -> Result<ItemCard, ServiceError> {
        self.engine
            .catalog()
            .card(item)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no item {item}")))
    }

    fn question_view(&self, s: &Session) -> Result<QuestionView, ServiceError> {
        Ok(QuestionView {
            session_id: s.id().to_string(),
            phase: s.phase(),
            question: s.pending().map(|i| self.card(i)).transpose()?,
            answered: s.answered(),
            total: s.params().num_questions,
        })
    }
}

#[derive(Debug, Default, Deserialize)]
struct CreateRequest {
    method: Option<String>,
    num_questions: Option<usize>,
    num_recs: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct AnswerRequest {
    item: usize,
    rating: f64,
}

#[derive(Debug, Deserialize)]
struct FeedbackRequest {
    item: usize,
    verdict: String,
    #[serde(default)]
    known: Option<bool>,
}

#[derive(Debug, Serialize)]
struct QuestionView {
    session_id: String,
    phase: Phase,
    question: Option<ItemCard>,
    answered: usize,
    total: usize,
}

#[derive(Debug, Serialize)]
struct RecommendationsView {
    session_id: String,
    phase: Phase,
    items: Vec<ItemCard>,
}

#[derive(Debug, Serialize)]
struct FeedbackView {
    recorded: bool,
    phase: Phase,
    remaining: usize,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::Validation(e.body_text()))
}

async fn create_session(
    State(app): State<Arc<App>>,
    payload: Option<Json<CreateRequest>>,
) -> Result<(StatusCode, Json<QuestionView>), ServiceError> {
    let req = payload.map(|Json(r)| r).unwrap_or_default();
    let method = crate::Method::choose(req.method.as_deref().unwrap_or("random"))?;
    let seed = req.seed.unwrap_or_else(rand::random);
    let params = app.engine.params(method, seed, req.num_questions, req.num_recs)?;
    let id = format!("{:032x}", rand::random::<u128>());
    let session = app.engine.start(id.clone(), params, now_ms())?;
    let mut slot = Slot { session, flushed: 0 };
    app.persist(&mut slot)?;
    let view = app.question_view(&slot.session)?;
    app.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(slot)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_question(
    State(app): State<Arc<App>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<QuestionView>, ServiceError> {
    let slot = app.slot(&id)?;
    let slot = slot.lock().unwrap();
    Ok(Json(app.question_view(&slot.session)?))
}

async fn post_answer(
    State(app): State<Arc<App>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<QuestionView>, ServiceError> {
    let req = body(payload)?;
    let slot = app.slot(&id)?;
    let mut slot = slot.lock().unwrap();
    app.engine.answer(&mut slot.session, req.item, req.rating)?;
    app.persist(&mut slot)?;
    Ok(Json(app.question_view(&slot.session)?))
}

async fn get_recommendations(
    State(app): State<Arc<App>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<RecommendationsView>, ServiceError> {
    let slot = app.slot(&id)?;
    let slot = slot.lock().unwrap();
    let s = &slot.session;
    let Some(recs) = s.recommendations() else {
        return Err(ServiceError::Conflict("questions are still pending".into()));
    };
    let items = recs.iter().map(|r| app.card(r.item)).collect::<Result<_, _>>()?;
    Ok(Json(RecommendationsView {
        session_id: id,
        phase: s.phase(),
        items,
    }))
}

async fn post_feedback(
    State(app): State<Arc<App>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<FeedbackView>, ServiceError> {
    let req = body(payload)?;
    let verdict: Verdict = req.verdict.parse()?;
    let slot = app.slot(&id)?;
    let mut slot = slot.lock().unwrap();
    let entry = app.engine.feedback(&mut slot.session, req.item, verdict, req.known)?;
    app.persist(&mut slot)?;
    let s = &slot.session;
    if let Some(sink) = &app.feedback {
        let external = app.card(entry.item)?.external_id;
        let rec = FeedbackRecord::new(s.id(), s.params().method, &entry, external, now_ms());
        let mut sink = sink.lock().unwrap();
        let header = std::mem::replace(&mut sink.needs_header, false);
        append_feedback(&mut sink.out, &rec, header)?;
    }
    let total = s.recommendations().map_or(0, |r| r.len());
    Ok(Json(FeedbackView {
        recorded: true,
        phase: s.phase(),
        remaining: total - s.feedback().len(),
    }))
}

async fn get_item(State(app): State<Arc<App>>, UrlPath(id): UrlPath<String>) -> Result<Json<ItemCard>, ServiceError> {
    let item: usize = id
        .parse()
        .map_err(|_| ServiceError::NotFound(format!("no item {id:?}")))?;
    Ok(Json(app.card(item)?))
}

/// JSON API plus, when `static_dir` is set, the files under it for every
/// other path.
pub fn router(app: Arc<App>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/question", get(get_question))
        .route("/sessions/{id}/answers", post(post_answer))
        .route("/sessions/{id}/recommendations", get(get_recommendations))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/items/{id}", get(get_item))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(app: Arc<App>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
