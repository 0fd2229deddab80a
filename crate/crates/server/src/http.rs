//! HTTP handlers for assets, annotations, stories and the session upgrade.

use std::collections::HashSet;
use std::io::{Read, Write};

use axum::body::{Body, Bytes};
use axum::extract::ws::WebSocketUpgrade;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use relic_core::{Metadata, SurfacePoint};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::ApiError;
use crate::model::{
    now_secs, Annotation, AnnotationDraft, AnnotationPatch, AssetKind, AssetRecord, ContentEncoding,
    PartialSessionState, StoryDocument, StoryDraft,
};
use crate::storage::{digest_of, is_valid_key, MetadataStoreExt};
use crate::AppState;

pub const METADATA_HEADER: &str = "x-asset-metadata";
pub const KIND_HEADER: &str = "x-asset-kind";
pub const DIGEST_HEADER: &str = "x-asset-digest";

const ASSETS: &str = "assets";
/// Bodies smaller than this are never compressed on the fly.
const MIN_COMPRESS: u64 = 1024;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let limit = usize::try_from(state.config().max_blob_size).unwrap_or(usize::MAX);
    Router::new()
        .route("/health", get(health))
        .route("/assets", get(list_assets).put(put_asset))
        .route("/assets/{id}", get(get_asset))
        .route("/assets/{id}/record", get(get_record))
        .route("/assets/{id}/annotations", get(list_annotations).post(create_annotation))
        .route(
            "/assets/{id}/annotations/{aid}",
            get(get_annotation).patch(update_annotation).delete(delete_annotation),
        )
        .route("/stories", axum::routing::post(save_story))
        .route("/stories/{id}", get(load_story))
        .route("/stories/{id}/revisions", get(story_revisions))
        .route("/audit", get(audit))
        .route("/session/{room_id}", get(session))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))
}

fn checked_id(what: &'static str, id: &str) -> ApiResult<()> {
    if is_valid_key(id) {
        Ok(())
    } else {
        Err(ApiError::not_found(what, id))
    }
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"ok": true}))
}

/// JSON text restricted to printable ASCII so it fits in a header value.
fn ascii_json(value: &impl serde::Serialize) -> String {
    let text = serde_json::to_string(value).expect("metadata serializes");
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_ascii() && !c.is_ascii_control() {
            out.push(c);
        } else {
            let mut buf = [0u16; 2];
            for unit in c.encode_utf16(&mut buf) {
                out.push_str(&format!("\\u{unit:04x}"));
            }
        }
    }
    out
}

fn header_str<'a>(headers: &'a HeaderMap, name: &str) -> ApiResult<Option<&'a str>> {
    headers
        .get(name)
        .map(|v| {
            v.to_str()
                .map_err(|_| ApiError::BadRequest(format!("header {name} is not ASCII")))
        })
        .transpose()
}

fn accepts_gzip(headers: &HeaderMap) -> bool {
    let Some(value) = headers.get(header::ACCEPT_ENCODING).and_then(|v| v.to_str().ok()) else {
        return false;
    };
    value.split(',').any(|item| {
        let mut parts = item.split(';').map(str::trim);
        let coding = parts.next().unwrap_or("");
        let q = parts
            .find_map(|p| p.strip_prefix("q="))
            .and_then(|q| q.parse::<f32>().ok())
            .unwrap_or(1.0);
        (coding.eq_ignore_ascii_case("gzip") || coding == "*") && q > 0.0
    })
}

fn gunzip(bytes: &[u8], limit: u64) -> ApiResult<Vec<u8>> {
    let mut out = Vec::new();
    GzDecoder::new(bytes)
        .take(limit.saturating_add(1))
        .read_to_end(&mut out)
        .map_err(|e| ApiError::BadRequest(format!("invalid gzip body: {e}")))?;
    if out.len() as u64 > limit {
        return Err(ApiError::TooLarge {
            size: out.len() as u64,
            limit,
        });
    }
    Ok(out)
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::with_capacity(bytes.len() / 2), flate2::Compression::fast());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

/// A satisfiable single byte range, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteRange {
    pub start: u64,
    pub end: u64,
}

/// Parses a `Range` header against a body of `size` bytes. `Ok(None)` means
/// the header should be ignored (absent, malformed or multi-range).
pub fn parse_range(value: Option<&str>, size: u64) -> ApiResult<Option<ByteRange>> {
    let Some(spec) = value.and_then(|v| v.trim().strip_prefix("bytes=")) else {
        return Ok(None);
    };
    if spec.contains(',') {
        return Ok(None);
    }
    let Some((a, b)) = spec.trim().split_once('-') else {
        return Ok(None);
    };
    let (a, b) = (a.trim(), b.trim());
    let range = match (a.is_empty(), b.is_empty()) {
        (true, false) => {
            let Ok(n) = b.parse::<u64>() else { return Ok(None) };
            if n == 0 || size == 0 {
                return Err(ApiError::RangeNotSatisfiable { size });
            }
            ByteRange {
                start: size.saturating_sub(n),
                end: size - 1,
            }
        }
        (false, _) => {
            let Ok(start) = a.parse::<u64>() else { return Ok(None) };
            let end = if b.is_empty() {
                u64::MAX
            } else {
                let Ok(end) = b.parse::<u64>() else { return Ok(None) };
                if end < start {
                    return Ok(None);
                }
                end
            };
            if start >= size {
                return Err(ApiError::RangeNotSatisfiable { size });
            }
            ByteRange {
                start,
                end: end.min(size - 1),
            }
        }
        (true, true) => return Ok(None),
    };
    Ok(Some(range))
}

fn etag_matches(headers: &HeaderMap, tags: &[&str]) -> bool {
    let Some(value) = headers.get(header::IF_NONE_MATCH).and_then(|v| v.to_str().ok()) else {
        return false;
    };
    value.split(',').map(str::trim).any(|t| {
        let t = t.strip_prefix("W/").unwrap_or(t);
        t == "*" || tags.contains(&t)
    })
}

#[derive(Deserialize)]
struct PutQuery {
    kind: Option<String>,
}

/// Sums `meshes[].triangle_count` of a scene document, if it is one.
fn scene_triangle_count(bytes: &[u8]) -> Option<u64> {
    let doc: serde_json::Value = serde_json::from_slice(bytes).ok()?;
    doc.get("meshes")?
        .as_array()?
        .iter()
        .map(|m| m.get("triangle_count").and_then(|c| c.as_u64()))
        .sum()
}

async fn put_asset(
    State(app): State<AppState>,
    Query(q): Query<PutQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let limit = app.config().max_blob_size;
    if body.len() as u64 > limit {
        return Err(ApiError::TooLarge {
            size: body.len() as u64,
            limit,
        });
    }
    let kind = match q.kind.as_deref() {
        None => AssetKind::Raw,
        Some(k) => k.parse().map_err(ApiError::BadRequest)?,
    };
    let mut metadata: Metadata = match header_str(&headers, METADATA_HEADER)? {
        None => Metadata::new(),
        Some(text) => serde_json::from_str(text)
            .map_err(|e| ApiError::BadRequest(format!("{METADATA_HEADER} must be a JSON object: {e}")))?,
    };
    let gzipped = match header_str(&headers, header::CONTENT_ENCODING.as_str())? {
        None => false,
        Some(e) if e.eq_ignore_ascii_case("identity") => false,
        Some(e) if e.eq_ignore_ascii_case("gzip") => true,
        Some(e) => return Err(ApiError::BadRequest(format!("unsupported content encoding {e:?}"))),
    };
    let keep_compressed = gzipped && app.config().compression;

    let blobs = app.blobs().clone();
    let (decoded_digest, size, stored_digest, stored_size, triangles) = blocking(move || {
        let decoded = if gzipped { gunzip(&body, limit)? } else { body.to_vec() };
        if decoded.is_empty() {
            return Err(ApiError::Validation("asset body must not be empty".into()));
        }
        let triangles = (kind == AssetKind::Scene)
            .then(|| scene_triangle_count(&decoded))
            .flatten();
        let digest = digest_of(&decoded);
        let stored: &[u8] = if keep_compressed { &body } else { &decoded };
        let stored_digest = blobs.put(stored)?;
        Ok((digest, decoded.len() as u64, stored_digest, stored.len() as u64, triangles))
    })
    .await?;
    if let Some(t) = triangles {
        metadata.entry("triangle_count".into()).or_insert(t.into());
    }

    let record = AssetRecord {
        id: new_id(),
        kind,
        digest: decoded_digest,
        size,
        content_encoding: if keep_compressed { ContentEncoding::Gzip } else { ContentEncoding::None },
        stored_digest,
        stored_size,
        metadata,
        created_at: now_secs(),
    };
    app.meta().put_json(ASSETS, &record.id, &record)?;
    log::debug!("stored asset {} ({} bytes, {})", record.id, record.size, record.kind);
    let mut resp = (StatusCode::CREATED, Json(&record)).into_response();
    let location = format!("/assets/{}", record.id);
    resp.headers_mut()
        .insert(header::LOCATION, HeaderValue::from_str(&location).expect("ids are ASCII"));
    resp.headers_mut()
        .insert(header::ETAG, HeaderValue::from_str(&format!("\"{}\"", record.digest)).expect("hex"));
    Ok(resp)
}

fn load_record(app: &AppState, id: &str) -> ApiResult<AssetRecord> {
    checked_id("asset", id)?;
    app.meta()
        .get_json::<AssetRecord>(ASSETS, id)?
        .ok_or_else(|| ApiError::not_found("asset", id))
}

/// Reads and verifies the stored bytes of an asset.
async fn load_blob(app: &AppState, record: &AssetRecord) -> ApiResult<Vec<u8>> {
    let blobs = app.blobs().clone();
    let (id, digest) = (record.id.clone(), record.stored_digest.clone());
    blocking(move || {
        let bytes = blobs.get(&digest)?.ok_or_else(|| {
            log::error!("blob {digest} of asset {id} is missing");
            ApiError::Integrity { id: id.clone() }
        })?;
        if digest_of(&bytes) != digest {
            log::error!("blob {digest} of asset {id} does not match its digest");
            return Err(ApiError::Integrity { id });
        }
        Ok(bytes)
    })
    .await
}

async fn list_assets(State(app): State<AppState>) -> ApiResult<Json<Vec<AssetRecord>>> {
    Ok(Json(app.meta().list_json(ASSETS)?))
}

async fn get_record(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AssetRecord>> {
    Ok(Json(load_record(&app, &id)?))
}

async fn get_asset(State(app): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let record = load_record(&app, &id)?;
    let identity_tag = format!("\"{}\"", record.digest);
    let gzip_tag = format!("\"{}.gz\"", record.digest);

    let mut out = HeaderMap::new();
    let put = |out: &mut HeaderMap, name: HeaderName, value: String| {
        if let Ok(v) = HeaderValue::from_str(&value) {
            out.insert(name, v);
        }
    };
    put(&mut out, header::ACCEPT_RANGES, "bytes".into());
    put(&mut out, header::CACHE_CONTROL, "public, max-age=31536000, immutable".into());
    put(&mut out, header::VARY, "accept-encoding".into());
    put(&mut out, header::CONTENT_TYPE, "application/octet-stream".into());
    put(&mut out, HeaderName::from_static(KIND_HEADER), record.kind.to_string());
    put(&mut out, HeaderName::from_static(DIGEST_HEADER), format!("sha256={}", record.digest));
    put(&mut out, HeaderName::from_static(METADATA_HEADER), ascii_json(&record.metadata));

    let range_header = header_str(&headers, header::RANGE.as_str())?;
    let range = parse_range(range_header, record.size)?;
    let want_gzip = range.is_none()
        && app.config().compression
        && accepts_gzip(&headers)
        && (record.content_encoding == ContentEncoding::Gzip || record.size >= MIN_COMPRESS);

    if etag_matches(&headers, &[&identity_tag, &gzip_tag]) {
        put(&mut out, header::ETAG, if want_gzip { gzip_tag } else { identity_tag });
        return Ok((StatusCode::NOT_MODIFIED, out).into_response());
    }

    let stored = load_blob(&app, &record).await?;
    let encoding = record.content_encoding;
    let size = record.size;
    let body = blocking(move || match (want_gzip, encoding) {
        (true, ContentEncoding::Gzip) => Ok(stored),
        (true, ContentEncoding::None) => Ok(gzip(&stored)),
        (false, ContentEncoding::Gzip) => gunzip(&stored, size),
        (false, ContentEncoding::None) => Ok(stored),
    })
    .await?;

    if want_gzip {
        put(&mut out, header::ETAG, gzip_tag);
        put(&mut out, header::CONTENT_ENCODING, "gzip".into());
        return Ok((StatusCode::OK, out, Body::from(body)).into_response());
    }
    put(&mut out, header::ETAG, identity_tag);
    if body.len() as u64 != record.size {
        return Err(ApiError::Integrity { id: record.id });
    }
    match range {
        None => Ok((StatusCode::OK, out, Body::from(body)).into_response()),
        Some(r) => {
            put(
                &mut out,
                header::CONTENT_RANGE,
                format!("bytes {}-{}/{}", r.start, r.end, record.size),
            );
            let slice = Bytes::from(body).slice(r.start as usize..=r.end as usize);
            Ok((StatusCode::PARTIAL_CONTENT, out, Body::from(slice)).into_response())
        }
    }
}

fn annotations_of(asset_id: &str) -> String {
    format!("annotations/{asset_id}")
}

fn load_annotations(app: &AppState, asset_id: &str) -> ApiResult<Vec<Annotation>> {
    let mut list: Vec<Annotation> = app.meta().list_json(&annotations_of(asset_id))?;
    list.sort_by(|a, b| a.order_index.cmp(&b.order_index).then_with(|| a.id.cmp(&b.id)));
    Ok(list)
}

struct AnnotationFields<'a> {
    anchor: &'a SurfacePoint,
    media_refs: &'a [String],
    order_index: i64,
    persisted_state: Option<&'a PartialSessionState>,
}

fn validate_annotation(
    app: &AppState,
    asset: &AssetRecord,
    fields: AnnotationFields<'_>,
    others: &[Annotation],
) -> ApiResult<u64> {
    fields
        .anchor
        .validate()
        .map_err(|e| ApiError::Validation(format!("invalid anchor: {e}")))?;
    if let Some(count) = asset.triangle_count() {
        if u64::from(fields.anchor.face_index) >= count {
            return Err(ApiError::Validation(format!(
                "anchor face_index {} out of range for {count} triangles",
                fields.anchor.face_index
            )));
        }
    }
    let order = u64::try_from(fields.order_index)
        .map_err(|_| ApiError::Validation(format!("order_index {} must be >= 0", fields.order_index)))?;
    if let Some(clash) = others.iter().find(|a| a.order_index == order) {
        return Err(ApiError::Conflict(format!(
            "order_index {order} is already used by annotation {}",
            clash.id
        )));
    }
    for r in fields.media_refs {
        if !is_valid_key(r) || app.meta().get(ASSETS, r)?.is_none() {
            return Err(ApiError::Referential(format!("media_ref {r} is not a known asset")));
        }
    }
    if let Some(s) = fields.persisted_state {
        s.validate()
            .map_err(|e| ApiError::Validation(format!("invalid persisted_state: {e}")))?;
    }
    Ok(order)
}

async fn list_annotations(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<Annotation>>> {
    load_record(&app, &id)?;
    Ok(Json(load_annotations(&app, &id)?))
}

async fn create_annotation(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Annotation>)> {
    let asset = load_record(&app, &id)?;
    let draft: AnnotationDraft = parse_json(&body)?;
    let lock = app.lock_for(&format!("asset:{id}"));
    let _guard = lock.lock().await;
    let existing = load_annotations(&app, &id)?;
    let order = validate_annotation(
        &app,
        &asset,
        AnnotationFields {
            anchor: &draft.anchor,
            media_refs: &draft.media_refs,
            order_index: draft.order_index,
            persisted_state: draft.persisted_state.as_ref(),
        },
        &existing,
    )?;
    let ann = Annotation {
        id: new_id(),
        asset_id: id.clone(),
        anchor: draft.anchor,
        title: draft.title,
        body: draft.body,
        media_refs: draft.media_refs,
        order_index: order,
        persisted_state: draft.persisted_state,
        created_at: now_secs(),
        revision: 1,
    };
    app.meta().put_json(&annotations_of(&id), &ann.id, &ann)?;
    Ok((StatusCode::CREATED, Json(ann)))
}

fn load_annotation(app: &AppState, asset_id: &str, aid: &str) -> ApiResult<Annotation> {
    checked_id("annotation", aid)?;
    app.meta()
        .get_json(&annotations_of(asset_id), aid)?
        .ok_or_else(|| ApiError::not_found("annotation", aid))
}

async fn get_annotation(
    State(app): State<AppState>,
    Path((id, aid)): Path<(String, String)>,
) -> ApiResult<Json<Annotation>> {
    load_record(&app, &id)?;
    Ok(Json(load_annotation(&app, &id, &aid)?))
}

async fn update_annotation(
    State(app): State<AppState>,
    Path((id, aid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<Annotation>> {
    let asset = load_record(&app, &id)?;
    let patch: AnnotationPatch = parse_json(&body)?;
    let lock = app.lock_for(&format!("asset:{id}"));
    let _guard = lock.lock().await;
    let mut ann = load_annotation(&app, &id, &aid)?;
    if let Some(a) = patch.anchor {
        ann.anchor = a;
    }
    if let Some(t) = patch.title {
        ann.title = t;
    }
    if let Some(b) = patch.body {
        ann.body = b;
    }
    if let Some(m) = patch.media_refs {
        ann.media_refs = m;
    }
    if let Some(s) = patch.persisted_state {
        ann.persisted_state = s;
    }
    let order_index = patch.order_index.unwrap_or(ann.order_index as i64);
    let others: Vec<Annotation> = load_annotations(&app, &id)?
        .into_iter()
        .filter(|a| a.id != aid)
        .collect();
    ann.order_index = validate_annotation(
        &app,
        &asset,
        AnnotationFields {
            anchor: &ann.anchor,
            media_refs: &ann.media_refs,
            order_index,
            persisted_state: ann.persisted_state.as_ref(),
        },
        &others,
    )?;
    ann.revision += 1;
    app.meta().put_json(&annotations_of(&id), &aid, &ann)?;
    Ok(Json(ann))
}

async fn delete_annotation(
    State(app): State<AppState>,
    Path((id, aid)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    load_record(&app, &id)?;
    checked_id("annotation", &aid)?;
    let lock = app.lock_for(&format!("asset:{id}"));
    let _guard = lock.lock().await;
    if app.meta().delete(&annotations_of(&id), &aid)? {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found("annotation", aid))
    }
}

fn story_collection(id: &str) -> String {
    format!("stories/{id}")
}

fn revision_key(rev: u64) -> String {
    format!("r{rev:010}")
}

fn story_revisions_of(app: &AppState, id: &str) -> ApiResult<Vec<u64>> {
    Ok(app
        .meta()
        .keys(&story_collection(id))?
        .iter()
        .filter_map(|k| k.strip_prefix('r')?.parse().ok())
        .collect())
}

async fn save_story(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<StoryDocument>)> {
    let draft: StoryDraft = parse_json(&body)?;
    if !is_valid_key(&draft.asset_id) || app.meta().get(ASSETS, &draft.asset_id)?.is_none() {
        return Err(ApiError::Referential(format!("asset {} does not exist", draft.asset_id)));
    }
    let mut seen = HashSet::new();
    for stop in &draft.stops {
        if !seen.insert(stop) {
            return Err(ApiError::Validation(format!("stop {stop} appears more than once")));
        }
        let exists = is_valid_key(stop)
            && app
                .meta()
                .get(&annotations_of(&draft.asset_id), stop)?
                .is_some();
        if !exists {
            return Err(ApiError::Referential(format!(
                "stop {stop} is not an annotation on asset {}",
                draft.asset_id
            )));
        }
    }

    let id = match &draft.id {
        Some(id) => {
            checked_id("story", id)?;
            id.clone()
        }
        None => new_id(),
    };
    let lock = app.lock_for(&format!("story:{id}"));
    let _guard = lock.lock().await;
    let revisions = story_revisions_of(&app, &id)?;
    if draft.id.is_some() && revisions.is_empty() {
        return Err(ApiError::not_found("story", id));
    }
    if let Some(&last) = revisions.last() {
        let previous: StoryDocument = app
            .meta()
            .get_json(&story_collection(&id), &revision_key(last))?
            .ok_or_else(|| ApiError::not_found("story", id.clone()))?;
        if previous.asset_id != draft.asset_id {
            return Err(ApiError::Validation(format!(
                "story {id} belongs to asset {}, not {}",
                previous.asset_id, draft.asset_id
            )));
        }
    }
    let doc = StoryDocument {
        id: id.clone(),
        revision: revisions.last().copied().unwrap_or(0) + 1,
        asset_id: draft.asset_id,
        stops: draft.stops,
        title: draft.title,
        author: draft.author,
        created_at: now_secs(),
    };
    app.meta()
        .put_json(&story_collection(&id), &revision_key(doc.revision), &doc)?;
    Ok((StatusCode::CREATED, Json(doc)))
}

#[derive(Deserialize)]
struct RevisionQuery {
    revision: Option<u64>,
}

async fn load_story(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RevisionQuery>,
) -> ApiResult<Json<StoryDocument>> {
    checked_id("story", &id)?;
    let rev = match q.revision {
        Some(r) => r,
        None => *story_revisions_of(&app, &id)?
            .last()
            .ok_or_else(|| ApiError::not_found("story", id.clone()))?,
    };
    app.meta()
        .get_json(&story_collection(&id), &revision_key(rev))?
        .map(Json)
        .ok_or_else(|| ApiError::not_found("story revision", format!("{id}@{rev}")))
}

async fn story_revisions(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    checked_id("story", &id)?;
    let revisions = story_revisions_of(&app, &id)?;
    if revisions.is_empty() {
        return Err(ApiError::not_found("story", id));
    }
    Ok(Json(serde_json::json!({"id": id, "revisions": revisions})))
}

async fn audit(State(app): State<AppState>) -> ApiResult<Json<crate::model::AuditReport>> {
    let app2 = app.clone();
    Ok(Json(blocking(move || app2.audit().map_err(ApiError::from)).await?))
}

async fn session(
    State(app): State<AppState>,
    Path(room_id): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    checked_id("room", &room_id)?;
    let hub = app.hub().clone();
    let shutdown = app.shutdown_signal();
    Ok(ws.on_upgrade(move |socket| crate::session::serve_socket(socket, room_id, hub, shutdown)))
}
