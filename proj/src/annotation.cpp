#include "vcfl/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <set>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"
#include "vcfl/random.hpp"

namespace vcfl {

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void AnnotationConfig::validate() const {
  if (grid_rows < 1 || grid_cols < 1 || pages_per_session < 1)
    throw Error(ErrorCode::InvalidArgument, "grid and pages per session must be >= 1");
  if (quorum < 1) throw Error(ErrorCode::InvalidArgument, "quorum must be >= 1");
  if (min_session_images < 1) throw Error(ErrorCode::InvalidArgument, "min_session_images must be >= 1");
}

void ExperimentSpec::validate() const {
  if (alphabet.empty()) throw Error(ErrorCode::InvalidArgument, "experiment alphabet is empty");
  std::set<std::string> seen;
  for (const auto& a : alphabet) {
    if (a.empty() || a == kUnknownLabel)
      throw Error(ErrorCode::InvalidArgument, "alphabet symbols must be non-empty and not '?'");
    if (!seen.insert(a).second) throw Error(ErrorCode::InvalidArgument, "duplicate alphabet symbol '" + a + "'");
  }
  if (!seen.count(target_label))
    throw Error(ErrorCode::InvalidArgument, "target label '" + target_label + "' is not in the alphabet");
  if (!(positive_value >= 0.0 && positive_value <= 1.0 && negative_value >= 0.0 && negative_value <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "label values must lie in [0,1]");
}

bool ExperimentSpec::accepts(const std::string& label) const {
  return label == kUnknownLabel || std::find(alphabet.begin(), alphabet.end(), label) != alphabet.end();
}

std::size_t AnnotationSession::image_count() const {
  std::size_t n = 0;
  for (const auto& p : pages) n += p.size();
  return n;
}

std::optional<std::string> plurality(const std::map<std::string, std::size_t>& histogram, std::size_t quorum) {
  std::size_t total = 0, best = 0, ties = 0;
  std::string winner;
  for (const auto& [label, count] : histogram) {
    total += count;
    if (count > best) {
      best = count;
      winner = label;
      ties = 1;
    } else if (count == best) {
      ++ties;
    }
  }
  if (total < quorum || best == 0 || ties > 1 || winner == kUnknownLabel) return std::nullopt;
  return winner;
}

AnnotationStore::AnnotationStore(AnnotationConfig config, std::optional<std::filesystem::path> state_dir)
    : config_(config), dir_(std::move(state_dir)) {
  config_.validate();
  if (!dir_) return;
  std::filesystem::create_directories(*dir_);
  const auto snap = *dir_ / "snapshot.json";
  const auto log_path = *dir_ / "events.jsonl";
  try {
    if (std::filesystem::exists(snap)) {
      std::ifstream in(snap);
      load_state(nlohmann::json::parse(in));
    }
    if (std::filesystem::exists(log_path)) {
      std::ifstream in(log_path);
      std::string line;
      while (std::getline(in, line))
        if (!line.empty()) apply(nlohmann::json::parse(line));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, "annotation state in " + dir_->string() + ": " + e.what());
  }
  events_.open(log_path, std::ios::app);
  if (!events_) throw Error(ErrorCode::Io, "cannot open " + log_path.string());
}

void AnnotationStore::log(const nlohmann::json& event) {
  if (!dir_) return;
  events_ << event.dump() << '\n';
  events_.flush();
  if (!events_) throw Error(ErrorCode::Io, "cannot append to the annotation event log");
}

// Replays one logged event. The same code path serves live writes, so a
// reloaded store is identical to the one that wrote the log.
void AnnotationStore::apply(const nlohmann::json& e) {
  const auto type = e.at("type").get<std::string>();
  if (type == "experiment") {
    const auto id = e.at("id").get<std::string>();
    experiments_[id] = Experiment{e.at("spec").get<ExperimentSpec>(), {}};
    next_experiment_ = std::max(next_experiment_, e.at("seq").get<std::uint64_t>() + 1);
  } else if (type == "images") {
    auto& exp = experiments_.at(e.at("experiment").get<std::string>());
    for (const auto& item : e.at("images")) {
      auto stored = image_from_json(item);
      exp.images.push_back(stored.id);
      images_[stored.id] = Image{stored.id, e.at("experiment").get<std::string>(), std::move(stored.image), {}, {}};
    }
    next_image_ = std::max(next_image_, e.at("next").get<std::uint64_t>());
  } else if (type == "session") {
    auto s = e.at("session").get<AnnotationSession>();
    sessions_[s.id] = s;
    next_session_ = std::max(next_session_, e.at("seq").get<std::uint64_t>() + 1);
  } else if (type == "votes") {
    auto& s = sessions_.at(e.at("session").get<std::string>());
    const auto token = e.at("token").get<std::string>();
    for (const auto& v : e.at("votes")) {
      auto& img = images_.at(v.at("image_id").get<std::string>());
      img.votes[token] = VoteRecord{img.id, token, v.at("label").get<std::string>(), v.at("ts").get<std::int64_t>()};
    }
    const auto k = e.at("page").get<std::size_t>();
    s.submitted[k] = true;
    while (s.cursor < s.pages.size() && s.submitted[s.cursor]) ++s.cursor;
  } else if (type == "commit") {
    for (const auto& r : e.at("records"))
      images_.at(r.at("image_id").get<std::string>()).committed = r.at("label").get<std::string>();
  } else {
    throw Error(ErrorCode::Parse, "unknown annotation event '" + type + "'");
  }
}

std::string AnnotationStore::create_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::unique_lock lock(mutex_);
  const auto seq = next_experiment_;
  nlohmann::json e{{"type", "experiment"}, {"id", "exp-" + std::to_string(seq)}, {"seq", seq}, {"spec", spec}};
  log(e);
  apply(e);
  return e["id"];
}

const AnnotationStore::Experiment& AnnotationStore::find_experiment(const std::string& id) const {
  const auto it = experiments_.find(id);
  if (it == experiments_.end()) throw Error(ErrorCode::UnknownExperiment, "no experiment '" + id + "'");
  return it->second;
}

ExperimentSpec AnnotationStore::experiment(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return find_experiment(id).spec;
}

std::vector<std::string> AnnotationStore::experiment_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : experiments_) out.push_back(id);
  return out;
}

std::vector<std::string> AnnotationStore::add_images(const std::string& experiment_id,
                                                     std::span<const BinaryImage> images) {
  std::unique_lock lock(mutex_);
  find_experiment(experiment_id);
  nlohmann::json items = nlohmann::json::array();
  std::vector<std::string> ids;
  auto next = next_image_;
  for (const auto& img : images) {
    if (img.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty image");
    ids.push_back("img-" + std::to_string(next++));
    items.push_back(image_to_json(ids.back(), img));
  }
  nlohmann::json e{{"type", "images"}, {"experiment", experiment_id}, {"images", items}, {"next", next}};
  log(e);
  apply(e);
  return ids;
}

std::size_t AnnotationStore::image_count(const std::string& experiment_id) const {
  std::shared_lock lock(mutex_);
  return find_experiment(experiment_id).images.size();
}

StoredImage AnnotationStore::image(const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  const auto it = images_.find(image_id);
  if (it == images_.end()) throw Error(ErrorCode::InvalidArgument, "no image '" + image_id + "'");
  return {it->first, it->second.pixels};
}

AnnotationSession AnnotationStore::create_session(const std::string& experiment_id, const std::string& token) {
  if (token.empty()) throw Error(ErrorCode::Unauthorized, "missing annotator token");
  std::unique_lock lock(mutex_);
  const auto& exp = find_experiment(experiment_id);

  std::vector<const Image*> eligible;
  for (const auto& id : exp.images) {
    const auto& img = images_.at(id);
    if (img.votes.size() < config_.quorum && !img.votes.count(token)) eligible.push_back(&img);
  }
  if (eligible.empty() || eligible.size() < config_.min_session_images) {
    throw Error(ErrorCode::InsufficientImages,
                std::to_string(eligible.size()) + " images available to this annotator, sessions need " +
                    std::to_string(config_.min_session_images));
  }
  const auto seq = next_session_;
  Rng rng(derive_seed(config_.seed, seq));
  shuffle(eligible, rng);
  std::stable_sort(eligible.begin(), eligible.end(),
                   [](const Image* a, const Image* b) { return a->votes.size() < b->votes.size(); });
  eligible.resize(std::min(eligible.size(), config_.session_size()));

  AnnotationSession s;
  s.id = "s-" + std::to_string(seq);
  s.experiment_id = experiment_id;
  s.token = token;
  for (std::size_t k = 0; k < eligible.size(); k += config_.page_size()) {
    std::vector<std::string> page;
    for (std::size_t q = k; q < std::min(eligible.size(), k + config_.page_size()); ++q)
      page.push_back(eligible[q]->id);
    s.pages.push_back(std::move(page));
  }
  s.submitted.assign(s.pages.size(), false);
  nlohmann::json e{{"type", "session"}, {"seq", seq}, {"session", s}};
  log(e);
  apply(e);
  return s;
}

const AnnotationSession& AnnotationStore::find_session(const std::string& id, const std::string& token) const {
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
  if (it->second.token != token) throw Error(ErrorCode::Unauthorized, "session belongs to another annotator");
  return it->second;
}

AnnotationSession AnnotationStore::session(const std::string& session_id, const std::string& token) const {
  std::shared_lock lock(mutex_);
  return find_session(session_id, token);
}

std::vector<StoredImage> AnnotationStore::page(const std::string& session_id, std::size_t k,
                                               const std::string& token) const {
  std::shared_lock lock(mutex_);
  const auto& s = find_session(session_id, token);
  if (k >= s.pages.size()) throw Error(ErrorCode::InvalidArgument, "page index out of range");
  std::vector<StoredImage> out;
  for (const auto& id : s.pages[k]) out.push_back({id, images_.at(id).pixels});
  return out;
}

SubmitAck AnnotationStore::submit_labels(const std::string& session_id, std::size_t k, const std::string& token,
                                         const std::map<std::string, std::string>& labels) {
  std::unique_lock lock(mutex_);
  const auto& s = find_session(session_id, token);
  if (k >= s.pages.size()) throw Error(ErrorCode::InvalidArgument, "page index out of range");
  const auto& spec = find_experiment(s.experiment_id).spec;
  const auto& ids = s.pages[k];
  if (labels.size() != ids.size())
    throw Error(ErrorCode::InvalidArgument, "page has " + std::to_string(ids.size()) + " images, got " +
                                                std::to_string(labels.size()) + " labels");

  SubmitAck ack;
  nlohmann::json votes = nlohmann::json::array();
  const auto ts = now_ms();
  for (const auto& id : ids) {
    const auto it = labels.find(id);
    if (it == labels.end()) throw Error(ErrorCode::InvalidArgument, "no label for image '" + id + "'");
    if (!spec.accepts(it->second)) throw Error(ErrorCode::BadLabel, "label '" + it->second + "' is not allowed");
    const auto& img = images_.at(id);
    const auto prev = img.votes.find(token);
    if (prev != img.votes.end()) {
      if (prev->second.label != it->second) {
        throw Error(ErrorCode::DuplicateVote,
                    "image '" + id + "' already has label '" + prev->second.label + "' from this annotator");
      }
      ++ack.unchanged;
      continue;
    }
    votes.push_back({{"image_id", id}, {"label", it->second}, {"ts", ts}});
  }
  ack.recorded = votes.size();
  nlohmann::json e{{"type", "votes"}, {"session", session_id}, {"token", token}, {"page", k}, {"votes", votes}};
  log(e);
  apply(e);
  const auto& after = sessions_.at(session_id);
  ack.cursor = after.cursor;
  ack.complete = after.complete();
  return ack;
}

AggregateLabel AnnotationStore::aggregate_image(const Image& img) const {
  AggregateLabel a;
  a.image_id = img.id;
  for (const auto& [_, v] : img.votes) ++a.histogram[v.label];
  a.votes = img.votes.size();
  if (const auto w = plurality(a.histogram, config_.quorum)) {
    a.decided = true;
    a.label = *w;
  }
  a.committed_label = img.committed;
  a.conflict = img.committed && (!a.decided || a.label != *img.committed);
  return a;
}

std::vector<AggregateLabel> AnnotationStore::aggregate(const std::string& experiment_id) const {
  std::shared_lock lock(mutex_);
  std::vector<AggregateLabel> out;
  for (const auto& id : find_experiment(experiment_id).images) out.push_back(aggregate_image(images_.at(id)));
  return out;
}

std::vector<VoteRecord> AnnotationStore::votes(const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  const auto it = images_.find(image_id);
  if (it == images_.end()) throw Error(ErrorCode::InvalidArgument, "no image '" + image_id + "'");
  std::vector<VoteRecord> out;
  for (const auto& [_, v] : it->second.votes) out.push_back(v);
  return out;
}

std::size_t AnnotationStore::vote_count(const std::string& experiment_id) const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& id : find_experiment(experiment_id).images) n += images_.at(id).votes.size();
  return n;
}

CommitDelta AnnotationStore::commit(const std::string& experiment_id) {
  std::unique_lock lock(mutex_);
  const auto& exp = find_experiment(experiment_id);
  CommitDelta delta;
  delta.experiment_id = experiment_id;
  std::size_t decided = 0;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& id : exp.images) {
    const auto& img = images_.at(id);
    const auto a = aggregate_image(img);
    if (img.committed) {
      ++decided;  // committed labels never change; a later conflict is only flagged
      continue;
    }
    if (!a.decided) {
      ++delta.pending;
      continue;
    }
    ++decided;
    const double value = a.label == exp.spec.target_label ? exp.spec.positive_value : exp.spec.negative_value;
    delta.records.push_back({id, a.label, value, img.pixels});
    records.push_back({{"image_id", id}, {"label", a.label}});
  }
  if (decided == 0) throw Error(ErrorCode::NoDecidedLabels, "no image of '" + experiment_id + "' is decided");
  if (!records.empty()) {
    nlohmann::json e{{"type", "commit"}, {"experiment", experiment_id}, {"records", records}};
    log(e);
    apply(e);
  }
  return delta;
}

nlohmann::json AnnotationStore::state_json() const {
  nlohmann::json exps = nlohmann::json::object();
  for (const auto& [id, e] : experiments_) exps[id] = {{"spec", e.spec}, {"images", e.images}};
  nlohmann::json imgs = nlohmann::json::array();
  for (const auto& [id, img] : images_) {
    auto j = image_to_json(id, img.pixels);
    j["experiment"] = img.experiment_id;
    nlohmann::json votes = nlohmann::json::array();
    for (const auto& [token, v] : img.votes) votes.push_back({{"token", token}, {"label", v.label}, {"ts", v.timestamp_ms}});
    j["votes"] = votes;
    if (img.committed) j["committed"] = *img.committed;
    imgs.push_back(std::move(j));
  }
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& [_, s] : sessions_) sessions.push_back(s);
  return {{"format", "vcfl-annotation/1"},
          {"experiments", exps},
          {"images", imgs},
          {"sessions", sessions},
          {"next", {next_experiment_, next_image_, next_session_}}};
}

void AnnotationStore::load_state(const nlohmann::json& j) {
  for (const auto& [id, e] : j.at("experiments").items())
    experiments_[id] = Experiment{e.at("spec").get<ExperimentSpec>(), e.at("images").get<std::vector<std::string>>()};
  for (const auto& item : j.at("images")) {
    auto stored = image_from_json(item);
    Image img{stored.id, item.at("experiment").get<std::string>(), std::move(stored.image), {}, {}};
    for (const auto& v : item.at("votes")) {
      const auto token = v.at("token").get<std::string>();
      img.votes[token] = VoteRecord{img.id, token, v.at("label").get<std::string>(), v.at("ts").get<std::int64_t>()};
    }
    if (item.contains("committed")) img.committed = item["committed"].get<std::string>();
    images_[img.id] = std::move(img);
  }
  for (const auto& s : j.at("sessions")) {
    auto session = s.get<AnnotationSession>();
    sessions_[session.id] = std::move(session);
  }
  const auto next = j.at("next");
  next_experiment_ = next.at(0);
  next_image_ = next.at(1);
  next_session_ = next.at(2);
}

void AnnotationStore::snapshot() {
  std::unique_lock lock(mutex_);
  if (!dir_) return;
  const auto tmp = *dir_ / "snapshot.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << state_json().dump();
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, *dir_ / "snapshot.json");
  events_.close();
  events_.open(*dir_ / "events.jsonl", std::ios::trunc);
  if (!events_) throw Error(ErrorCode::Io, "cannot reset the annotation event log");
}

std::vector<std::string> StoreBackend::add_images(const std::string& experiment_id,
                                                  std::span<const BinaryImage> images) {
  return store_.add_images(experiment_id, images);
}

std::optional<AnnotationSession> StoreBackend::open_session(const std::string& experiment_id,
                                                            const std::string& token) {
  try {
    return store_.create_session(experiment_id, token);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InsufficientImages) return std::nullopt;
    throw;
  }
}

std::vector<StoredImage> StoreBackend::page(const std::string& session_id, std::size_t k, const std::string& token) {
  return store_.page(session_id, k, token);
}

SubmitAck StoreBackend::submit(const std::string& session_id, std::size_t k, const std::string& token,
                               const std::map<std::string, std::string>& labels) {
  return store_.submit_labels(session_id, k, token, labels);
}

CommitDelta StoreBackend::commit(const std::string& experiment_id) { return store_.commit(experiment_id); }

AnnotationOracle::AnnotationOracle(AnnotationBackend& backend, std::string experiment_id,
                                   std::vector<ScriptedVoter> voters)
    : Oracle(OracleMode::Exact), backend_(backend), experiment_id_(std::move(experiment_id)), voters_(std::move(voters)) {
  if (voters_.empty()) throw Error(ErrorCode::InvalidArgument, "an annotation oracle needs voters");
}

std::vector<double> AnnotationOracle::run_batch(std::span<const BinaryImage> images) {
  if (images.empty()) return {};
  const auto ids = backend_.add_images(experiment_id_, images);
  for (const auto& voter : voters_) {
    while (auto s = backend_.open_session(experiment_id_, voter.token)) {
      for (std::size_t k = 0; k < s->pages.size(); ++k) {
        std::map<std::string, std::string> labels;
        for (const auto& img : backend_.page(s->id, k, voter.token)) labels[img.id] = voter.label(img.image);
        backend_.submit(s->id, k, voter.token, labels);
      }
    }
  }
  const auto delta = backend_.commit(experiment_id_);
  std::map<std::string, double> value;
  for (const auto& r : delta.records) value[r.image_id] = r.value;
  std::vector<double> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = value.find(id);
    if (it == value.end()) throw Error(ErrorCode::NoDecidedLabels, "image '" + id + "' ended undecided");
    out.push_back(it->second);
  }
  return out;
}

std::vector<double> AnnotationOracle::query_batch(std::span<const BinaryImage> images) {
  auto out = run_batch(images);
  count_queries(images.size());
  return out;
}

double AnnotationOracle::answer(const BinaryImage& image) {
  return run_batch(std::span<const BinaryImage>(&image, 1)).front();
}

void merge_commit(CausalDataset& dataset, const CommitDelta& delta, std::size_t round) {
  for (const auto& r : delta.records) dataset.append({r.image, r.value, Provenance::OracleQuery, round});
}

void to_json(nlohmann::json& j, const AnnotationConfig& c) {
  j = nlohmann::json{{"grid_rows", c.grid_rows},
                     {"grid_cols", c.grid_cols},
                     {"pages_per_session", c.pages_per_session},
                     {"quorum", c.quorum},
                     {"min_session_images", c.min_session_images},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AnnotationConfig& c) {
  c = AnnotationConfig{};
  c.grid_rows = j.value("grid_rows", c.grid_rows);
  c.grid_cols = j.value("grid_cols", c.grid_cols);
  c.pages_per_session = j.value("pages_per_session", c.pages_per_session);
  c.quorum = j.value("quorum", c.quorum);
  c.min_session_images = j.value("min_session_images", c.min_session_images);
  c.seed = j.value("seed", c.seed);
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"alphabet", s.alphabet},
                     {"target_label", s.target_label},
                     {"positive_value", s.positive_value},
                     {"negative_value", s.negative_value}};
}

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  s = ExperimentSpec{};
  s.name = j.value("name", s.name);
  s.alphabet = j.at("alphabet").get<std::vector<std::string>>();
  s.target_label = j.at("target_label").get<std::string>();
  s.positive_value = j.value("positive_value", s.positive_value);
  s.negative_value = j.value("negative_value", s.negative_value);
}

void to_json(nlohmann::json& j, const AnnotationSession& s) {
  j = nlohmann::json{{"id", s.id},
                     {"experiment_id", s.experiment_id},
                     {"token", s.token},
                     {"pages", s.pages},
                     {"submitted", s.submitted},
                     {"cursor", s.cursor},
                     {"complete", s.complete()}};
}

void from_json(const nlohmann::json& j, AnnotationSession& s) {
  s = AnnotationSession{};
  s.id = j.at("id").get<std::string>();
  s.experiment_id = j.at("experiment_id").get<std::string>();
  s.token = j.value("token", std::string{});
  s.pages = j.at("pages").get<std::vector<std::vector<std::string>>>();
  s.submitted = j.contains("submitted") ? j["submitted"].get<std::vector<bool>>()
                                        : std::vector<bool>(s.pages.size(), false);
  s.cursor = j.value("cursor", std::size_t{0});
}

void to_json(nlohmann::json& j, const AggregateLabel& a) {
  j = nlohmann::json{{"image_id", a.image_id}, {"histogram", a.histogram}, {"votes", a.votes},
                     {"decided", a.decided},   {"label", a.label},         {"conflict", a.conflict}};
  j["committed_label"] = a.committed_label ? nlohmann::json(*a.committed_label) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, AggregateLabel& a) {
  a = AggregateLabel{};
  a.image_id = j.at("image_id").get<std::string>();
  a.histogram = j.at("histogram").get<std::map<std::string, std::size_t>>();
  a.votes = j.at("votes");
  a.decided = j.at("decided");
  a.label = j.at("label").get<std::string>();
  a.conflict = j.value("conflict", false);
  if (j.contains("committed_label") && !j["committed_label"].is_null())
    a.committed_label = j["committed_label"].get<std::string>();
}

void to_json(nlohmann::json& j, const CommitDelta& d) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : d.records) {
    auto item = image_to_json(r.image_id, r.image);
    item["image_id"] = r.image_id;
    item["label"] = r.label;
    item["value"] = r.value;
    records.push_back(std::move(item));
  }
  j = nlohmann::json{{"experiment_id", d.experiment_id}, {"records", records}, {"pending", d.pending}};
}

void from_json(const nlohmann::json& j, CommitDelta& d) {
  d = CommitDelta{};
  d.experiment_id = j.value("experiment_id", std::string{});
  d.pending = j.value("pending", std::size_t{0});
  for (const auto& r : j.at("records")) {
    auto img = image_from_json(r);
    d.records.push_back({r.at("image_id").get<std::string>(), r.at("label").get<std::string>(),
                         r.at("value").get<double>(), std::move(img.image)});
  }
}

void to_json(nlohmann::json& j, const SubmitAck& a) {
  j = nlohmann::json{{"recorded", a.recorded}, {"unchanged", a.unchanged}, {"cursor", a.cursor}, {"complete", a.complete}};
}

void from_json(const nlohmann::json& j, SubmitAck& a) {
  a.recorded = j.at("recorded");
  a.unchanged = j.at("unchanged");
  a.cursor = j.at("cursor");
  a.complete = j.at("complete");
}

nlohmann::json image_to_json(const std::string& id, const BinaryImage& image) {
  nlohmann::json j{{"id", id}, {"rows", image.rows()}, {"cols", image.cols()}, {"pixels_base64", image.to_base64()}};
  j["side"] = image.rows() == image.cols() ? nlohmann::json(image.rows()) : nlohmann::json(nullptr);
  return j;
}

StoredImage image_from_json(const nlohmann::json& j) {
  std::size_t rows = 0, cols = 0;
  if (j.contains("rows") && j.contains("cols")) {
    rows = j["rows"];
    cols = j["cols"];
  } else if (j.contains("side") && !j["side"].is_null()) {
    rows = cols = j["side"];
  } else {
    throw Error(ErrorCode::InvalidArgument, "image needs rows/cols or side");
  }
  return {j.value("id", std::string{}), BinaryImage::from_base64(j.at("pixels_base64").get<std::string>(), rows, cols)};
}

}  // namespace vcfl
