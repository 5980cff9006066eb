#include <doctest.h>

#include <httplib.h>

#include <filesystem>
#include <thread>

#include <nlohmann/json.hpp>

#include "vcfl/annotation.hpp"
#include "vcfl/annotation_server.hpp"
#include "vcfl/error.hpp"
#include "vcfl/grating.hpp"

using namespace vcfl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kDigits{"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};

ExperimentSpec digit_spec() { return {"sevens", kDigits, "7", 1.0, 0.0}; }

AnnotationConfig small_config(std::size_t min_images = 1) {
  AnnotationConfig c;
  c.min_session_images = min_images;
  return c;
}

std::vector<BinaryImage> images(std::size_t n, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<BinaryImage> out;
  for (std::size_t k = 0; k < n; ++k) {
    BinaryImage img(6);
    for (std::size_t p = 0; p < img.size(); ++p) img.set(p, bernoulli(rng, 0.5));
    out.push_back(img);
  }
  return out;
}

std::map<std::string, std::string> label_all(const std::vector<StoredImage>& page, const std::string& label) {
  std::map<std::string, std::string> out;
  for (const auto& img : page) out[img.id] = label;
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no exception");
  return ErrorCode::Io;
}

// Runs one full session for `token`, labelling every image with `rule`.
std::size_t work_session(AnnotationStore& store, const std::string& exp, const std::string& token,
                         const std::function<std::string(const StoredImage&)>& rule) {
  const auto s = store.create_session(exp, token);
  std::size_t votes = 0;
  for (std::size_t k = 0; k < s.pages.size(); ++k) {
    std::map<std::string, std::string> labels;
    for (const auto& img : store.page(s.id, k, token)) labels[img.id] = rule(img);
    votes += store.submit_labels(s.id, k, token, labels).recorded;
  }
  return votes;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "vcfl-tests" / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("aggregation") {
  using H = std::map<std::string, std::size_t>;
  TEST_CASE("plurality with quorum") {
    CHECK(plurality(H{{"7", 3}, {"1", 1}, {"?", 1}}, 5) == "7");
    CHECK_FALSE(plurality(H{{"7", 2}, {"1", 2}, {"?", 1}}, 5));
    CHECK_FALSE(plurality(H{{"7", 4}}, 5));
    CHECK_FALSE(plurality(H{{"?", 3}, {"7", 2}}, 5));
    CHECK(plurality(H{{"7", 2}, {"1", 1}, {"3", 1}, {"?", 1}}, 5) == "7");
    CHECK(plurality(H{{"7", 5}}, 5) == "7");
  }

  TEST_CASE("plurality matches a brute-force count") {
    Rng rng(3);
    const std::vector<std::string> labels{"a", "b", "c", "?"};
    for (int t = 0; t < 2000; ++t) {
      H h;
      std::size_t total = 0;
      for (const auto& l : labels) {
        const auto n = uniform_index(rng, 4);
        if (n) h[l] = n;
        total += n;
      }
      std::size_t best = 0, winners = 0;
      std::string top;
      for (const auto& [l, n] : h) {
        if (n > best) {
          best = n;
          winners = 1;
          top = l;
        } else if (n == best) {
          ++winners;
        }
      }
      const bool decided = total >= 5 && winners == 1 && top != "?";
      const auto got = plurality(h, 5);
      CHECK(got.has_value() == decided);
      if (decided) CHECK(*got == top);
    }
  }
}

TEST_SUITE("store") {
  TEST_CASE("session layout") {
    AnnotationStore store{AnnotationConfig{}};
    const auto exp = store.create_experiment(digit_spec());
    store.add_images(exp, images(1000));
    const auto s = store.create_session(exp, "ann-1");
    CHECK(s.pages.size() == 10);
    for (const auto& p : s.pages) CHECK(p.size() == 25);
    CHECK(s.cursor == 0);
    CHECK_FALSE(s.complete());
    std::set<std::string> distinct;
    for (const auto& p : s.pages) distinct.insert(p.begin(), p.end());
    CHECK(distinct.size() == 250);
  }

  TEST_CASE("too few images for a session") {
    AnnotationStore store{AnnotationConfig{}};
    const auto exp = store.create_experiment(digit_spec());
    store.add_images(exp, images(100));
    CHECK(code_of([&] { store.create_session(exp, "a"); }) == ErrorCode::InsufficientImages);
    CHECK(code_of([&] { store.create_session("exp-404", "a"); }) == ErrorCode::UnknownExperiment);
  }

  TEST_CASE("an annotator who voted on everything gets nothing") {
    AnnotationStore store(small_config());
    const auto exp = store.create_experiment(digit_spec());
    store.add_images(exp, images(30));
    CHECK(work_session(store, exp, "a", [](const StoredImage&) { return "1"; }) == 30);
    CHECK(code_of([&] { store.create_session(exp, "a"); }) == ErrorCode::InsufficientImages);
    CHECK(store.create_session(exp, "b").image_count() == 30);
  }

  TEST_CASE("submit, resubmit, conflicting vote, bad label") {
    AnnotationStore store{AnnotationConfig{}};
    const auto exp = store.create_experiment(digit_spec());
    store.add_images(exp, images(300));
    const auto s = store.create_session(exp, "a");
    const auto page = store.page(s.id, 0, "a");
    REQUIRE(page.size() == 25);
    const auto ack = store.submit_labels(s.id, 0, "a", label_all(page, "7"));
    CHECK(ack.recorded == 25);
    CHECK(ack.cursor == 1);
    CHECK(store.vote_count(exp) == 25);

    const auto again = store.submit_labels(s.id, 0, "a", label_all(page, "7"));
    CHECK(again.recorded == 0);
    CHECK(again.unchanged == 25);
    CHECK(store.vote_count(exp) == 25);

    CHECK(code_of([&] { store.submit_labels(s.id, 0, "a", label_all(page, "1")); }) == ErrorCode::DuplicateVote);

    const auto page1 = store.page(s.id, 1, "a");
    auto labels = label_all(page1, "3");
    labels[page1.back().id] = "x";
    CHECK(code_of([&] { store.submit_labels(s.id, 1, "a", labels); }) == ErrorCode::BadLabel);
    CHECK(store.vote_count(exp) == 25);  // nothing from the rejected page

    labels.erase(page1.back().id);
    CHECK_THROWS_AS(store.submit_labels(s.id, 1, "a", labels), Error);  // page not covered
    CHECK(code_of([&] { store.page(s.id, 0, "b"); }) == ErrorCode::Unauthorized);  // someone else's session
    CHECK(code_of([&] { store.page("s-999", 0, "a"); }) == ErrorCode::UnknownSession);
  }

  TEST_CASE("aggregate and commit") {
    AnnotationStore store(small_config());
    const auto exp = store.create_experiment(digit_spec());
    const auto ids = store.add_images(exp, images(120));
    CHECK(code_of([&] { store.commit(exp); }) == ErrorCode::NoDecidedLabels);
    // the last 20 images get a tie
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < ids.size(); ++k) index[ids[k]] = k;
    const std::vector<std::string> voters{"v1", "v2", "v3", "v4", "v5"};
    for (std::size_t v = 0; v < voters.size(); ++v) {
      work_session(store, exp, voters[v], [&](const StoredImage& img) -> std::string {
        const auto k = index.at(img.id);
        if (k >= 100) return v < 2 ? "7" : v < 4 ? "1" : "?";
        return k % 3 == 0 ? "7" : "2";
      });
    }
    CHECK(store.vote_count(exp) == 600);
    const auto agg = store.aggregate(exp);
    std::size_t decided = 0;
    for (const auto& a : agg) decided += a.decided;
    CHECK(decided == 100);

    const auto delta = store.commit(exp);
    CHECK(delta.records.size() == 100);
    CHECK(delta.pending == 20);
    for (const auto& r : delta.records) {
      const auto k = index.at(r.image_id);
      CHECK(r.value == (k % 3 == 0 ? 1.0 : 0.0));
      CHECK(r.image == store.image(r.image_id).image);
    }
    const auto second = store.commit(exp);
    CHECK(second.records.empty());
    CHECK(second.pending == 20);

    CausalDataset data;
    merge_commit(data, delta, 3);
    CHECK(data.size() == 100);
    CHECK(data[0].provenance == Provenance::OracleQuery);
    CHECK(data[0].round == 3);
  }

  TEST_CASE("experiment spec validation") {
    AnnotationStore store;
    CHECK_THROWS_AS(store.create_experiment({"bad", {"a", "a"}, "a"}), Error);
    CHECK_THROWS_AS(store.create_experiment({"bad", {"a", "?"}, "a"}), Error);
    CHECK_THROWS_AS(store.create_experiment({"bad", {"a", "b"}, "c"}), Error);
  }

  TEST_CASE("concurrent annotators") {
    AnnotationStore store(small_config());
    const auto exp = store.create_experiment(digit_spec());
    store.add_images(exp, images(200));
    std::vector<std::thread> pool;
    for (int v = 0; v < 5; ++v)
      pool.emplace_back([&, v] { work_session(store, exp, "t" + std::to_string(v), [](const StoredImage&) { return "7"; }); });
    for (auto& t : pool) t.join();
    CHECK(store.vote_count(exp) == 1000);
    CHECK(store.commit(exp).records.size() == 200);
  }
}

TEST_SUITE("persistence") {
  TEST_CASE("event log replay and snapshot") {
    const auto dir = scratch("annotation-state");
    std::string exp;
    std::vector<AggregateLabel> before;
    {
      AnnotationStore store(small_config(), dir);
      exp = store.create_experiment(digit_spec());
      store.add_images(exp, images(40));
      for (auto t : {"a", "b", "c", "d", "e"}) work_session(store, exp, t, [](const StoredImage&) { return "7"; });
      store.commit(exp);
      before = store.aggregate(exp);
    }
    {
      AnnotationStore replayed(small_config(), dir);
      CHECK(json(replayed.aggregate(exp)) == json(before));
      CHECK(replayed.vote_count(exp) == 200);
      CHECK(replayed.commit(exp).records.empty());
      replayed.snapshot();
    }
    AnnotationStore from_snapshot(small_config(), dir);
    CHECK(json(from_snapshot.aggregate(exp)) == json(before));
    const auto id = from_snapshot.add_images(exp, images(1, 9));
    CHECK(id[0] == "img-41");
  }
}

TEST_SUITE("oracle") {
  TEST_CASE("scripted voters reproduce the exact grating oracle") {
    const GratingConfig g;
    AnnotationStore store(small_config());
    const auto exp = store.create_experiment(
        {"hbar", {"hbar", "none"}, "hbar", grating_causal_value(g, true), grating_causal_value(g, false)});
    StoreBackend backend(store);
    std::vector<ScriptedVoter> voters;
    for (int v = 0; v < 5; ++v)
      voters.push_back({"voter-" + std::to_string(v), [](const BinaryImage& im) { return detect_hbar(im) ? "hbar" : "none"; }});
    AnnotationOracle human(backend, exp, voters);
    GratingOracle synthetic(g, OracleMode::Exact);
    Rng rng(4);
    std::vector<BinaryImage> batch;
    for (int k = 0; k < 60; ++k) batch.push_back(grating_sample(g, rng).pixels);
    const auto got = human.query_batch(batch);
    for (std::size_t k = 0; k < batch.size(); ++k) CHECK(got[k] == synthetic.query(batch[k]));
    CHECK(human.queries() == 60);
    CHECK(human.query(batch[0]) == synthetic.query(batch[0]));
    CHECK(human.queries() == 61);
  }

  TEST_CASE("an undecided image fails the batch") {
    AnnotationStore store(small_config());
    const auto exp = store.create_experiment(digit_spec());
    StoreBackend backend(store);
    std::vector<ScriptedVoter> voters{{"a", [](const BinaryImage&) { return "7"; }},
                                      {"b", [](const BinaryImage&) { return "1"; }}};
    AnnotationOracle o(backend, exp, voters);
    const auto batch = images(3);
    CHECK(code_of([&] { o.query_batch(batch); }) == ErrorCode::NoDecidedLabels);
  }
}

TEST_SUITE("http") {
  struct Live {
    AnnotationStore store;
    AnnotationServer server;
    int port;
    Live(AnnotationConfig c = small_config())
        : store(c), server(store, ServerConfig{"127.0.0.1", 0, "admin", {}, true}), port(server.start()) {}
  };

  httplib::Headers auth(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

  TEST_CASE("full session over HTTP adds exactly 250 votes") {
    Live live{AnnotationConfig{}};
    HttpAnnotationClient admin("127.0.0.1", live.port, "admin");
    const auto exp = admin.create_experiment(digit_spec());
    admin.add_images(exp, images(600));
    httplib::Client cli("127.0.0.1", live.port);

    auto info = cli.Get("/experiments/" + exp);
    REQUIRE(info);
    const auto votes_before = json::parse(info->body)["votes"].get<std::size_t>();

    auto res = cli.Post("/sessions", auth("ann"), json{{"experiment_id", exp}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    const auto session = json::parse(res->body);
    const auto sid = session["id"].get<std::string>();
    for (int k = 0; k < 10; ++k) {
      auto page = cli.Get("/sessions/" + sid + "/pages/" + std::to_string(k), auth("ann"));
      REQUIRE(page);
      REQUIRE(page->status == 200);
      const auto body = json::parse(page->body);
      REQUIRE(body["images"].size() == 25);
      json labels = json::object();
      for (const auto& img : body["images"]) {
        CHECK(img["side"] == 6);
        CHECK(img.contains("pixels_base64"));
        // pixels travel bit-packed: 36 bits -> 5 bytes -> 8 base64 chars
        CHECK(img["pixels_base64"].get<std::string>().size() == 8);
        labels[img["id"].get<std::string>()] = "7";
      }
      auto ack = cli.Post("/sessions/" + sid + "/pages/" + std::to_string(k) + "/labels", auth("ann"), labels.dump(),
                          "application/json");
      REQUIRE(ack);
      CHECK(ack->status == 200);
      CHECK(json::parse(ack->body)["recorded"] == 25);
    }
    auto done = cli.Get("/sessions/" + sid, auth("ann"));
    REQUIRE(done);
    CHECK(json::parse(done->body)["cursor"] == 10);
    info = cli.Get("/experiments/" + exp);
    CHECK(json::parse(info->body)["votes"].get<std::size_t>() == votes_before + 250);
  }

  TEST_CASE("auth, errors and CORS") {
    Live live;
    httplib::Client cli("127.0.0.1", live.port);
    auto res = cli.Post("/experiments", json(digit_spec()).dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 401);
    CHECK(json::parse(res->body)["error"] == "Unauthorized");
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");

    res = cli.Post("/experiments", auth("admin"), json(digit_spec()).dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    const auto exp = json::parse(res->body)["id"].get<std::string>();

    res = cli.Post("/sessions", json{{"experiment_id", exp}}.dump(), "application/json");
    CHECK(res->status == 401);
    res = cli.Post("/sessions", auth("ann"), json{{"experiment_id", exp}}.dump(), "application/json");
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["error"] == "InsufficientImages");
    res = cli.Post("/sessions", auth("ann"), json{{"experiment_id", "exp-77"}}.dump(), "application/json");
    CHECK(res->status == 404);
    res = cli.Post("/sessions", auth("ann"), "{not json", "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"] == "Parse");
    res = cli.Post("/experiments/" + exp + "/commit", auth("ann"), "", "application/json");
    CHECK(res->status == 401);
    res = cli.Post("/experiments/" + exp + "/commit", auth("admin"), "", "application/json");
    CHECK(res->status == 409);
    res = cli.Options("/sessions");
    REQUIRE(res);
    CHECK(res->status == 204);
  }

  TEST_CASE("client surfaces server errors with their codes") {
    Live live;
    HttpAnnotationClient admin("127.0.0.1", live.port, "admin");
    const auto exp = admin.create_experiment(digit_spec());
    admin.add_images(exp, images(30));
    HttpAnnotationClient ann("127.0.0.1", live.port);
    const auto s = ann.open_session(exp, "ann");
    REQUIRE(s);
    const auto page = ann.page(s->id, 0, "ann");
    auto labels = label_all(page, "7");
    labels.begin()->second = "x";
    CHECK(code_of([&] { ann.submit(s->id, 0, "ann", labels); }) == ErrorCode::BadLabel);
    ann.submit(s->id, 0, "ann", label_all(page, "7"));
    CHECK(code_of([&] { ann.submit(s->id, 0, "ann", label_all(page, "3")); }) == ErrorCode::DuplicateVote);
    CHECK(ann.submit(s->id, 0, "ann", label_all(page, "7")).unchanged == 25);
    CHECK(code_of([&] { admin.commit(exp); }) == ErrorCode::NoDecidedLabels);
    HttpAnnotationClient wrong("127.0.0.1", live.port, "guess");
    CHECK(code_of([&] { wrong.commit(exp); }) == ErrorCode::Unauthorized);
  }

  TEST_CASE("tie and unknown-heavy fixtures stay undecided over HTTP") {
    Live live;
    HttpAnnotationClient admin("127.0.0.1", live.port, "admin");
    const auto exp = admin.create_experiment(digit_spec());
    admin.add_images(exp, images(2));
    HttpAnnotationClient ann("127.0.0.1", live.port);
    // image A: 7,7,1,1,? ; image B: ?,?,?,7,1
    const std::vector<std::pair<std::string, std::string>> votes{{"7", "?"}, {"7", "?"}, {"1", "?"}, {"1", "7"}, {"?", "1"}};
    for (std::size_t v = 0; v < votes.size(); ++v) {
      const auto token = "t" + std::to_string(v);
      const auto s = ann.open_session(exp, token);
      REQUIRE(s);
      const auto page = ann.page(s->id, 0, token);
      std::map<std::string, std::string> labels;
      for (const auto& img : page) labels[img.id] = img.id == "img-1" ? votes[v].first : votes[v].second;
      ann.submit(s->id, 0, token, labels);
    }
    const auto agg = admin.aggregate(exp);
    REQUIRE(agg.size() == 2);
    for (const auto& a : agg) {
      CHECK(a.votes == 5);
      CHECK_FALSE(a.decided);
    }
    CHECK(code_of([&] { admin.commit(exp); }) == ErrorCode::NoDecidedLabels);
  }

  TEST_CASE("restricted annotator tokens") {
    AnnotationStore store(small_config());
    AnnotationServer server(store, ServerConfig{"127.0.0.1", 0, "admin", {"alice"}, false});
    const int port = server.start();
    HttpAnnotationClient admin("127.0.0.1", port, "admin");
    const auto exp = admin.create_experiment(digit_spec());
    admin.add_images(exp, images(5));
    HttpAnnotationClient ann("127.0.0.1", port);
    CHECK(ann.open_session(exp, "alice"));
    CHECK(code_of([&] { ann.open_session(exp, "mallory"); }) == ErrorCode::Unauthorized);
    server.stop();
  }
}
