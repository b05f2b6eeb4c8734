#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <sqlite3.h>

#include "audit/crawl_log.hpp"
#include "audit/util.hpp"

namespace audit {

// Converter between the canonical line format and a table-per-type SQLite
// layout in the OpenWPM style: http_requests / http_responses /
// http_redirects plus javascript_cookies (script channel) and
// profile_cookies (header channel), with a crawl_meta side table.

namespace detail {

class SqliteDb {
public:
    SqliteDb(const std::string& path, bool create) {
        int flags = create ? (SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE) : SQLITE_OPEN_READONLY;
        if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
            std::string msg = db_ ? sqlite3_errmsg(db_) : "unknown error";
            if (db_) sqlite3_close(db_);
            throw AuditError("sqlite open failed: " + path + ": " + msg);
        }
    }
    ~SqliteDb() {
        if (db_) sqlite3_close(db_);
    }
    SqliteDb(const SqliteDb&) = delete;
    SqliteDb& operator=(const SqliteDb&) = delete;

    void exec(const std::string& sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown error";
            sqlite3_free(err);
            throw AuditError("sqlite exec failed: " + msg);
        }
    }

    sqlite3* get() { return db_; }

private:
    sqlite3* db_ = nullptr;
};

class SqliteStmt {
public:
    SqliteStmt(SqliteDb& db, const std::string& sql) : db_(db.get()) {
        if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK)
            throw AuditError(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db_));
    }
    ~SqliteStmt() {
        if (stmt_) sqlite3_finalize(stmt_);
    }
    SqliteStmt(const SqliteStmt&) = delete;
    SqliteStmt& operator=(const SqliteStmt&) = delete;

    void bind_text(int idx, const std::string& v) {
        check(sqlite3_bind_text(stmt_, idx, v.c_str(), -1, SQLITE_TRANSIENT));
    }
    void bind_opt_text(int idx, const std::optional<std::string>& v) {
        if (v) bind_text(idx, *v);
        else check(sqlite3_bind_null(stmt_, idx));
    }
    void bind_int64(int idx, std::int64_t v) { check(sqlite3_bind_int64(stmt_, idx, v)); }

    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw AuditError(std::string("sqlite step failed: ") + sqlite3_errmsg(db_));
    }
    void step_done() {
        if (step()) throw AuditError("sqlite: unexpected row");
    }
    void reset() {
        sqlite3_reset(stmt_);
        sqlite3_clear_bindings(stmt_);
    }

    std::string column_text(int idx) {
        const unsigned char* t = sqlite3_column_text(stmt_, idx);
        return t ? reinterpret_cast<const char*>(t) : "";
    }
    std::optional<std::string> column_opt_text(int idx) {
        if (sqlite3_column_type(stmt_, idx) == SQLITE_NULL) return std::nullopt;
        return column_text(idx);
    }
    std::int64_t column_int64(int idx) { return sqlite3_column_int64(stmt_, idx); }

private:
    void check(int rc) {
        if (rc != SQLITE_OK)
            throw AuditError(std::string("sqlite bind failed: ") + sqlite3_errmsg(db_));
    }
    sqlite3* db_ = nullptr;
    sqlite3_stmt* stmt_ = nullptr;
};

inline std::string headers_to_text(const std::vector<std::pair<std::string, std::string>>& hs) {
    ojson arr = ojson::array();
    for (const auto& [n, v] : hs) arr.push_back(ojson::array({n, v}));
    return arr.dump();
}

inline std::vector<std::pair<std::string, std::string>> headers_from_text(const std::string& t) {
    std::vector<std::pair<std::string, std::string>> out;
    if (t.empty()) return out;
    ojson arr = ojson::parse(t);
    for (const auto& h : arr) out.emplace_back(h[0].get<std::string>(), h[1].get<std::string>());
    return out;
}

} // namespace detail

inline void export_openwpm_db(const CrawlLog& log, const std::string& path) {
    std::remove(path.c_str());
    detail::SqliteDb db(path, /*create=*/true);
    db.exec(R"(
CREATE TABLE crawl_meta (
  id INTEGER PRIMARY KEY, persona_label TEXT NOT NULL, lean TEXT NOT NULL,
  run_index INTEGER NOT NULL, format_version INTEGER NOT NULL);
CREATE TABLE http_requests (
  id INTEGER PRIMARY KEY, visit_id TEXT NOT NULL, url TEXT NOT NULL, referrer TEXT,
  headers TEXT NOT NULL, site TEXT NOT NULL, timestamp INTEGER NOT NULL);
CREATE TABLE http_responses (
  id INTEGER PRIMARY KEY, visit_id TEXT NOT NULL, url TEXT NOT NULL, referrer TEXT,
  headers TEXT NOT NULL, site TEXT NOT NULL, timestamp INTEGER NOT NULL);
CREATE TABLE http_redirects (
  id INTEGER PRIMARY KEY, visit_id TEXT NOT NULL, url TEXT NOT NULL, referrer TEXT,
  location TEXT NOT NULL, headers TEXT NOT NULL, site TEXT NOT NULL, timestamp INTEGER NOT NULL);
CREATE TABLE javascript_cookies (
  id INTEGER PRIMARY KEY, visit_id TEXT NOT NULL, site TEXT NOT NULL, owner TEXT NOT NULL,
  name TEXT NOT NULL, value TEXT NOT NULL, timestamp INTEGER NOT NULL);
CREATE TABLE profile_cookies (
  id INTEGER PRIMARY KEY, visit_id TEXT NOT NULL, site TEXT NOT NULL, owner TEXT NOT NULL,
  name TEXT NOT NULL, value TEXT NOT NULL, timestamp INTEGER NOT NULL);
)");
    db.exec("BEGIN");
    {
        detail::SqliteStmt meta(db,
                                "INSERT INTO crawl_meta (persona_label, lean, run_index, "
                                "format_version) VALUES (?,?,?,?)");
        meta.bind_text(1, log.persona_label);
        meta.bind_text(2, to_string(log.lean));
        meta.bind_int64(3, log.run_index);
        meta.bind_int64(4, kLogFormatVersion);
        meta.step_done();
    }
    {
        detail::SqliteStmt req(db,
                               "INSERT INTO http_requests (visit_id, url, referrer, headers, "
                               "site, timestamp) VALUES (?,?,?,?,?,?)");
        detail::SqliteStmt resp(db,
                                "INSERT INTO http_responses (visit_id, url, referrer, headers, "
                                "site, timestamp) VALUES (?,?,?,?,?,?)");
        detail::SqliteStmt redir(db,
                                 "INSERT INTO http_redirects (visit_id, url, referrer, location, "
                                 "headers, site, timestamp) VALUES (?,?,?,?,?,?,?)");
        for (const auto& e : log.events) {
            if (e.kind == HttpKind::redirect) {
                redir.bind_text(1, e.visit_id);
                redir.bind_text(2, e.url);
                redir.bind_opt_text(3, e.referrer);
                redir.bind_text(4, e.location.value_or(""));
                redir.bind_text(5, detail::headers_to_text(e.headers));
                redir.bind_text(6, e.site);
                redir.bind_int64(7, e.timestamp_ms);
                redir.step_done();
                redir.reset();
            } else {
                auto& stmt = e.kind == HttpKind::request ? req : resp;
                stmt.bind_text(1, e.visit_id);
                stmt.bind_text(2, e.url);
                stmt.bind_opt_text(3, e.referrer);
                stmt.bind_text(4, detail::headers_to_text(e.headers));
                stmt.bind_text(5, e.site);
                stmt.bind_int64(6, e.timestamp_ms);
                stmt.step_done();
                stmt.reset();
            }
        }
    }
    {
        detail::SqliteStmt js(db,
                              "INSERT INTO javascript_cookies (visit_id, site, owner, name, "
                              "value, timestamp) VALUES (?,?,?,?,?,?)");
        detail::SqliteStmt prof(db,
                                "INSERT INTO profile_cookies (visit_id, site, owner, name, "
                                "value, timestamp) VALUES (?,?,?,?,?,?)");
        for (const auto& c : log.cookies) {
            auto& stmt = c.source == CookieSource::script ? js : prof;
            stmt.bind_text(1, c.visit_id);
            stmt.bind_text(2, c.site);
            stmt.bind_text(3, c.owner);
            stmt.bind_text(4, c.name);
            stmt.bind_text(5, c.value);
            stmt.bind_int64(6, c.timestamp_ms);
            stmt.step_done();
            stmt.reset();
        }
    }
    db.exec("COMMIT");
}

// Rebuilds a CrawlLog from the table layout. Records are ordered by
// (timestamp, table, rowid), which reproduces the canonical interleaving
// exactly when timestamps are unique.
inline CrawlLog import_openwpm_db(const std::string& path) {
    detail::SqliteDb db(path, /*create=*/false);
    CrawlLog log;
    {
        detail::SqliteStmt meta(db,
                                "SELECT persona_label, lean, run_index FROM crawl_meta "
                                "ORDER BY id LIMIT 1");
        if (!meta.step()) throw AuditError("import: crawl_meta is empty: " + path);
        log.persona_label = meta.column_text(0);
        auto lean = lean_from(meta.column_text(1));
        if (!lean) throw AuditError("import: bad lean in crawl_meta");
        log.lean = *lean;
        log.run_index = static_cast<int>(meta.column_int64(2));
    }

    struct Keyed {
        std::int64_t ts;
        int table;
        std::int64_t rowid;
    };
    std::vector<std::pair<Keyed, HttpEvent>> events;
    std::vector<std::pair<Keyed, CookieRecord>> cookies;

    auto read_http = [&](const char* table, HttpKind kind, int table_order) {
        bool redirect = kind == HttpKind::redirect;
        std::string sql = redirect
                              ? std::string("SELECT id, visit_id, url, referrer, location, "
                                            "headers, site, timestamp FROM ") + table
                              : std::string("SELECT id, visit_id, url, referrer, headers, site, "
                                            "timestamp FROM ") + table;
        detail::SqliteStmt stmt(db, sql);
        while (stmt.step()) {
            HttpEvent e;
            e.kind = kind;
            int col = 0;
            std::int64_t rowid = stmt.column_int64(col++);
            e.visit_id = stmt.column_text(col++);
            e.url = stmt.column_text(col++);
            e.referrer = stmt.column_opt_text(col++);
            if (redirect) e.location = stmt.column_text(col++);
            e.headers = detail::headers_from_text(stmt.column_text(col++));
            e.site = stmt.column_text(col++);
            e.timestamp_ms = stmt.column_int64(col++);
            events.push_back({{e.timestamp_ms, table_order, rowid}, std::move(e)});
        }
    };
    read_http("http_requests", HttpKind::request, 0);
    read_http("http_responses", HttpKind::response, 1);
    read_http("http_redirects", HttpKind::redirect, 2);

    auto read_cookies = [&](const char* table, CookieSource source, int table_order) {
        detail::SqliteStmt stmt(
            db, std::string("SELECT id, visit_id, site, owner, name, value, timestamp FROM ") +
                    table);
        while (stmt.step()) {
            CookieRecord c;
            c.source = source;
            std::int64_t rowid = stmt.column_int64(0);
            c.visit_id = stmt.column_text(1);
            c.site = stmt.column_text(2);
            c.owner = stmt.column_text(3);
            c.name = stmt.column_text(4);
            c.value = stmt.column_text(5);
            c.timestamp_ms = stmt.column_int64(6);
            cookies.push_back({{c.timestamp_ms, table_order, rowid}, std::move(c)});
        }
    };
    read_cookies("javascript_cookies", CookieSource::script, 3);
    read_cookies("profile_cookies", CookieSource::header, 4);

    auto by_key = [](const auto& a, const auto& b) {
        return std::tie(a.first.ts, a.first.table, a.first.rowid) <
               std::tie(b.first.ts, b.first.table, b.first.rowid);
    };
    std::sort(events.begin(), events.end(), by_key);
    std::sort(cookies.begin(), cookies.end(), by_key);
    for (auto& [_, e] : events) log.events.push_back(std::move(e));
    for (auto& [_, c] : cookies) log.cookies.push_back(std::move(c));
    return log;
}

} // namespace audit
