//! Local annotation service: video list, raw video streaming, glance CRUD
//! and export, plus the static UI bundle.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use glancevad::dataio::{DatasetManifest, GlanceFile, GlanceRecord, VideoEntry, VideoGlances};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower::ServiceExt;
use tower_http::services::{ServeDir, ServeFile};

/// Video file extensions probed, in order, when looking up `<id>.<ext>`.
const VIDEO_EXTENSIONS: &[&str] = &["mp4", "webm", "mkv", "avi", "mov", "ogv"];

pub struct AppState {
    manifest: DatasetManifest,
    videos_dir: PathBuf,
    glances_path: PathBuf,
    annotator: Option<String>,
    snapshot: RwLock<Arc<GlanceFile>>,
    // Held for the whole read-modify-persist-publish cycle of a mutation.
    writer: Mutex<()>,
}

impl AppState {
    /// Loads the glance file if present (validated against the manifest),
    /// otherwise starts empty without touching the disk.
    pub fn new(
        manifest: DatasetManifest,
        videos_dir: PathBuf,
        glances_path: PathBuf,
        annotator: Option<String>,
    ) -> glancevad::Result<Self> {
        let file = if glances_path.exists() {
            let f = GlanceFile::load(&glances_path)?;
            f.validate(&manifest)?;
            f
        } else {
            GlanceFile::default()
        };
        Ok(Self {
            manifest,
            videos_dir,
            glances_path,
            annotator,
            snapshot: RwLock::new(Arc::new(file)),
            writer: Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<GlanceFile> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    fn video(&self, id: &str) -> Result<&VideoEntry, ApiError> {
        self.manifest
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "video_not_found", format!("no video `{id}`")))
    }

    fn glances_of(&self, id: &str) -> VideoGlances {
        self.snapshot().get(id).cloned().unwrap_or_else(|| VideoGlances::new(id))
    }

    /// Applies `edit` to a copy of the current file, persists it atomically
    /// and only then publishes it to readers.
    async fn mutate<T>(
        &self,
        edit: impl FnOnce(&mut GlanceFile) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let _guard = self.writer.lock().await;
        let mut next = (*self.snapshot()).clone();
        let out = edit(&mut next)?;
        next.store(&self.glances_path).map_err(|e| {
            log::error!("persisting glances failed: {e}");
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "persist_failed", e.to_string())
        })?;
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(next);
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                detail: detail.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub duration_s: f64,
    pub total_frames: usize,
    pub fps: f64,
    pub annotated_count: usize,
}

#[derive(Debug, Deserialize)]
pub struct NewGlance {
    pub frame: i64,
    #[serde(default)]
    pub annotator: Option<String>,
}

async fn list_videos(State(state): State<Arc<AppState>>) -> Json<Vec<VideoSummary>> {
    let snapshot = state.snapshot();
    Json(
        state
            .manifest
            .videos
            .iter()
            .map(|e| VideoSummary {
                video_id: e.video_id.clone(),
                duration_s: e.total_frames as f64 / e.fps,
                total_frames: e.total_frames,
                fps: e.fps,
                annotated_count: snapshot.get(&e.video_id).map_or(0, |v| v.glances.len()),
            })
            .collect(),
    )
}

fn find_video_file(dir: &Path, id: &str) -> Option<PathBuf> {
    VIDEO_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

async fn stream_video(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    request: Request,
) -> Result<Response, ApiError> {
    state.video(&id)?;
    let path = find_video_file(&state.videos_dir, &id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "media_not_found",
            format!("no media file for `{id}` in {}", state.videos_dir.display()),
        )
    })?;
    let response = ServeFile::new(path)
        .oneshot(request)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "stream_failed", e.to_string()))?;
    Ok(response.map(Body::new))
}

async fn get_glances(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<VideoGlances>, ApiError> {
    state.video(&id)?;
    Ok(Json(state.glances_of(&id)))
}

async fn add_glance(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<NewGlance>, JsonRejection>,
) -> Result<(StatusCode, Json<VideoGlances>), ApiError> {
    let Json(new) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let entry = state.video(&id)?;
    if new.frame < 0 || new.frame as u64 >= entry.total_frames as u64 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "frame_out_of_range",
            format!("frame {} outside [0, {}) for `{id}`", new.frame, entry.total_frames),
        ));
    }
    if !entry.label.is_abnormal() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "normal_video",
            format!("`{id}` is labelled normal and cannot carry glances"),
        ));
    }
    let annotator = new.annotator.or_else(|| state.annotator.clone());
    let updated = state
        .mutate(|file| {
            let video = file.entry_mut(&id);
            match video.glances.binary_search_by_key(&new.frame, |g| g.frame) {
                Ok(_) => Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "duplicate_glance",
                    format!("frame {} of `{id}` is already annotated", new.frame),
                )),
                Err(pos) => {
                    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
                    video.glances.insert(
                        pos,
                        GlanceRecord {
                            frame: new.frame,
                            wall_clock_annotated_at: Some(now),
                            annotator,
                        },
                    );
                    Ok(video.clone())
                }
            }
        })
        .await?;
    Ok((StatusCode::CREATED, Json(updated)))
}

async fn delete_glance(
    State(state): State<Arc<AppState>>,
    UrlPath((id, frame)): UrlPath<(String, String)>,
) -> Result<StatusCode, ApiError> {
    state.video(&id)?;
    let frame: i64 = frame
        .parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("`{frame}` is not a frame index")))?;
    let absent = || {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "glance_not_found",
            format!("frame {frame} of `{id}` is not annotated"),
        )
    };
    if state.snapshot().get(&id).is_none_or(|v| v.glances.iter().all(|g| g.frame != frame)) {
        return Err(absent());
    }
    state
        .mutate(|file| {
            let video = file.entry_mut(&id);
            let pos = video.glances.iter().position(|g| g.frame == frame).ok_or_else(absent)?;
            video.glances.remove(pos);
            Ok(())
        })
        .await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn export(State(state): State<Arc<AppState>>) -> Response {
    let mut response = Json((*state.snapshot()).clone()).into_response();
    response.headers_mut().insert(
        header::CONTENT_DISPOSITION,
        HeaderValue::from_static("attachment; filename=\"glances.json\""),
    );
    response
}

async fn api_not_found(request: Request) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "not_found",
        format!("no route for {} {}", request.method(), request.uri().path()),
    )
}

/// The API router; UI assets are served from `assets` for all other paths.
pub fn router(state: Arc<AppState>, assets: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/videos", get(list_videos))
        .route("/videos/{id}/stream", get(stream_video))
        .route("/videos/{id}/glances", get(get_glances).post(add_glance))
        .route("/videos/{id}/glances/{frame}", axum::routing::delete(delete_glance))
        .route("/export", get(export))
        .fallback(api_not_found)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => app.fallback(api_not_found),
    }
}

pub async fn serve(state: Arc<AppState>, assets: Option<PathBuf>, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("annotation service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, assets.as_deref())).await
}
