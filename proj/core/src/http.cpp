// Copyright 2026 The tstem Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tstem/http.hpp"

#include <curl/curl.h>

#include <mutex>

#include "tstem/error.hpp"
#include "tstem/uri.hpp"

namespace tstem {

std::string HttpResponse::header(const std::string& lower_name) const {
  auto it = headers.find(lower_name);
  return it == headers.end() ? std::string{} : it->second;
}

HttpResponse HttpTransport::perform_streaming(
    const HttpRequest& req, const std::function<bool(std::string_view)>& on_data) {
  auto r = perform(req);
  on_data(r.body);
  r.body.clear();
  return r;
}

namespace {

void global_init() {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

struct Transfer {
  HttpResponse* resp;
  std::size_t max_body;
  const std::function<bool(std::string_view)>* sink = nullptr;
  bool stopped = false;  // we aborted on purpose
};

std::size_t on_body(char* data, std::size_t size, std::size_t n, void* user) {
  auto* t = static_cast<Transfer*>(user);
  std::size_t len = size * n;
  if (t->sink) {
    if (!(*t->sink)(std::string_view(data, len))) {
      t->stopped = true;
      return 0;
    }
    return len;
  }
  if (t->max_body > 0 && t->resp->body.size() + len > t->max_body) {
    t->resp->body.append(data, t->max_body - t->resp->body.size());
    t->resp->truncated = true;
    t->stopped = true;
    return 0;
  }
  t->resp->body.append(data, len);
  return len;
}

std::size_t on_header(char* data, std::size_t size, std::size_t n, void* user) {
  auto* t = static_cast<Transfer*>(user);
  std::string_view line(data, size * n);
  if (line.rfind("HTTP/", 0) == 0) {
    t->resp->headers.clear();  // new response (e.g. after 100-continue)
    return size * n;
  }
  auto colon = line.find(':');
  if (colon != std::string_view::npos) {
    auto name = ascii_lower(line.substr(0, colon));
    auto value = line.substr(colon + 1);
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.remove_prefix(1);
    while (!value.empty() && (value.back() == '\r' || value.back() == '\n' || value.back() == ' ')) {
      value.remove_suffix(1);
    }
    t->resp->headers[name] = std::string(value);
  }
  return size * n;
}

HttpResponse run(const HttpRequest& req, const std::function<bool(std::string_view)>* sink) {
  global_init();
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> h(curl_easy_init(), &curl_easy_cleanup);
  if (!h) throw TransportError("curl_easy_init failed", false);
  HttpResponse resp;
  Transfer t{&resp, req.max_body, sink};
  char errbuf[CURL_ERROR_SIZE] = {0};

  CURL* c = h.get();
  curl_easy_setopt(c, CURLOPT_URL, req.url.c_str());
  curl_easy_setopt(c, CURLOPT_ERRORBUFFER, errbuf);
  curl_easy_setopt(c, CURLOPT_NOSIGNAL, 1L);
  curl_easy_setopt(c, CURLOPT_FOLLOWLOCATION, 0L);
  curl_easy_setopt(c, CURLOPT_TIMEOUT_MS, static_cast<long>(req.timeout.count()));
  curl_easy_setopt(c, CURLOPT_CONNECTTIMEOUT_MS, static_cast<long>(req.timeout.count()));
  curl_easy_setopt(c, CURLOPT_USERAGENT, req.user_agent.c_str());
  curl_easy_setopt(c, CURLOPT_WRITEFUNCTION, &on_body);
  curl_easy_setopt(c, CURLOPT_WRITEDATA, &t);
  curl_easy_setopt(c, CURLOPT_HEADERFUNCTION, &on_header);
  curl_easy_setopt(c, CURLOPT_HEADERDATA, &t);
  curl_easy_setopt(c, CURLOPT_PROTOCOLS, CURLPROTO_HTTP | CURLPROTO_HTTPS);
  // An empty proxy string disables environment proxies for direct requests.
  curl_easy_setopt(c, CURLOPT_PROXY, req.proxy ? req.proxy->c_str() : "");
  if (req.method == "POST") {
    curl_easy_setopt(c, CURLOPT_POST, 1L);
    curl_easy_setopt(c, CURLOPT_POSTFIELDS, req.body.data());
    curl_easy_setopt(c, CURLOPT_POSTFIELDSIZE_LARGE, static_cast<curl_off_t>(req.body.size()));
  } else if (req.method != "GET") {
    curl_easy_setopt(c, CURLOPT_CUSTOMREQUEST, req.method.c_str());
  }
  curl_slist* hdrs = nullptr;
  for (const auto& [k, v] : req.headers) hdrs = curl_slist_append(hdrs, (k + ": " + v).c_str());
  hdrs = curl_slist_append(hdrs, "Expect:");
  curl_easy_setopt(c, CURLOPT_HTTPHEADER, hdrs);

  CURLcode rc = curl_easy_perform(c);
  curl_slist_free_all(hdrs);
  curl_easy_getinfo(c, CURLINFO_RESPONSE_CODE, &resp.status);

  if (rc == CURLE_WRITE_ERROR && t.stopped) return resp;
  if (rc != CURLE_OK) {
    std::string msg = std::string(curl_easy_strerror(rc));
    if (errbuf[0]) msg += ": " + std::string(errbuf);
    throw TransportError(req.method + " " + req.url + ": " + msg, true);
  }
  return resp;
}

}  // namespace

HttpResponse CurlTransport::perform(const HttpRequest& req) { return run(req, nullptr); }

HttpResponse CurlTransport::perform_streaming(
    const HttpRequest& req, const std::function<bool(std::string_view)>& on_data) {
  return run(req, &on_data);
}

std::shared_ptr<HttpTransport> default_transport() {
  static auto t = std::make_shared<CurlTransport>();
  return t;
}

nlohmann::json post_json(HttpTransport& t, const std::string& url, const nlohmann::json& body,
                         Millis timeout,
                         const std::vector<std::pair<std::string, std::string>>& headers) {
  HttpRequest req;
  req.method = "POST";
  req.url = url;
  req.body = body.dump();
  req.timeout = timeout;
  req.headers = headers;
  req.headers.emplace_back("Content-Type", "application/json");
  auto resp = t.perform(req);
  if (resp.status >= 500) {
    throw TransportError("POST " + url + ": status " + std::to_string(resp.status), true);
  }
  if (resp.status < 200 || resp.status >= 300) {
    throw PermanentError("POST " + url + ": status " + std::to_string(resp.status),
                         static_cast<int>(resp.status));
  }
  try {
    return nlohmann::json::parse(resp.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError("POST " + url + ": response is not JSON: " + e.what());
  }
}

std::string join_url(std::string_view base, std::string_view path) {
  std::string out(base);
  while (!out.empty() && out.back() == '/') out.pop_back();
  if (path.empty() || path.front() != '/') out += '/';
  out += path;
  return out;
}

}  // namespace tstem
