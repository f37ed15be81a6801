#include <gtest/gtest.h>

#include <atomic>
#include <functional>
#include <set>
#include <thread>

#include "cb/archive.hpp"
#include "cb/error.hpp"
#include "cb/repository.hpp"
#include "support.hpp"

using namespace cb;
using cbtest::TempDir;

namespace {

std::string archive_of(const std::string& content) {
  return pack_tar_gz({{"README", false, false, content}, {"workflow.yaml", false, false, "repetitions: 1\n"}});
}

ArtifactMeta meta(const std::string& title, Visibility v = Visibility::public_) {
  ArtifactMeta m;
  m.title = title;
  m.authors = {"R. Rosendo", "A. Costan"};
  m.description = "edge-to-cloud image pipeline";
  m.tags = {"edge", "iot"};
  m.visibility = v;
  m.links = {"https://example.org/doc"};
  return m;
}

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(Repository, CreateVersionDownloadRoundTrip) {
  TempDir tmp;
  ArtifactRepository repo(tmp.path());
  const auto id = repo.create_artifact(meta("Savanna"));
  EXPECT_EQ(id.size(), 36u);
  EXPECT_EQ(id[14], '4');  // UUID v4
  const auto a1 = archive_of("v1");
  const auto a2 = archive_of("v2");
  const auto v1 = repo.add_version(id, a1);
  const auto v2 = repo.add_version(id, a2);
  EXPECT_EQ(v1.version_id, 1);
  EXPECT_EQ(v2.version_id, 2);
  EXPECT_EQ(v1.size_bytes, a1.size());
  EXPECT_EQ(repo.download(id, 1), a1);
  EXPECT_EQ(repo.download(id, 2), a2);
  const auto got = repo.get(id);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->meta, meta("Savanna"));
  EXPECT_EQ(got->versions.size(), 2u);
  EXPECT_EQ(got->total_bytes(), a1.size() + a2.size());
}

TEST(Repository, IdenticalContentSharesOneBlob) {
  TempDir tmp;
  ArtifactRepository repo(tmp.path());
  const auto a = repo.create_artifact(meta("A"));
  const auto b = repo.create_artifact(meta("B"));
  const auto data = archive_of("same");
  const auto va = repo.add_version(a, data);
  const auto vb = repo.add_version(b, data);
  EXPECT_EQ(va.content_hash, vb.content_hash);
  std::size_t blobs = 0;
  for (const auto& e : std::filesystem::directory_iterator(tmp / "blobs")) blobs += e.is_regular_file();
  EXPECT_EQ(blobs, 1u);
}

TEST(Repository, RejectsInvalidInput) {
  TempDir tmp;
  ArtifactRepository repo(tmp.path());
  EXPECT_EQ(code_of([&] { repo.create_artifact(meta("")); }), "repository.invalid");
  const auto id = repo.create_artifact(meta("x"));
  EXPECT_EQ(code_of([&] { repo.add_version(id, "this is not an archive"); }), "archive.corrupt");
  EXPECT_EQ(code_of([&] { repo.add_version("nope", archive_of("x")); }), "repository.not_found");
  EXPECT_EQ(code_of([&] { repo.download(id, 1); }), "repository.not_found");
  EXPECT_TRUE(repo.get(id)->versions.empty());
}

TEST(Repository, SizeLimits) {
  TempDir tmp;
  const auto data = archive_of("limit");
  RepositoryOptions opts;
  opts.version_limit = data.size();
  opts.artifact_limit = data.size() * 2;
  ArtifactRepository repo(tmp.path(), opts);
  const auto id = repo.create_artifact(meta("x"));
  EXPECT_EQ(code_of([&] { repo.check_size(id, data.size() + 1); }), "repository.too_large");
  repo.add_version(id, data);
  repo.add_version(id, data);
  EXPECT_EQ(code_of([&] { repo.add_version(id, data); }), "repository.too_large");
  EXPECT_EQ(repo.get(id)->versions.size(), 2u);
  // Default limits.
  ArtifactRepository defaults(tmp / "other");
  const auto big = defaults.create_artifact(meta("big"));
  EXPECT_NO_THROW(defaults.check_size(big, 500'000'000));
  EXPECT_EQ(code_of([&] { defaults.check_size(big, 500'000'001); }), "repository.too_large");
}

TEST(Repository, ListingOrderFilterAndVisibility) {
  TempDir tmp;
  ArtifactRepository repo(tmp.path());
  auto m1 = meta("Savanna camera traps");
  auto m2 = meta("Smart farming");
  m2.tags = {"agriculture"};
  m2.authors = {"J. Doe"};
  m2.description = "sensor fusion";
  const auto a = repo.create_artifact(m1);
  const auto b = repo.create_artifact(m2);
  const auto hidden = repo.create_artifact(meta("Secret savanna", Visibility::private_));

  const auto all = repo.list();
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].artifact_id, b);  // newest first
  EXPECT_EQ(all[1].artifact_id, a);
  EXPECT_EQ(repo.list("SAVANNA").size(), 1u);
  EXPECT_EQ(repo.list("savanna", true).size(), 2u);
  EXPECT_EQ(repo.list("agricul").size(), 1u);
  EXPECT_EQ(repo.list("doe").size(), 1u);
  EXPECT_EQ(repo.list("fusion").size(), 1u);
  EXPECT_TRUE(repo.list("quantum").empty());
  EXPECT_FALSE(repo.get(hidden));
  EXPECT_TRUE(repo.get(hidden, true));
  EXPECT_EQ(parse_visibility("private"), Visibility::private_);
  EXPECT_THROW(parse_visibility("secret"), Error);
}

TEST(Repository, RestartReplaysJournal) {
  TempDir tmp;
  std::string id;
  std::vector<Artifact> before;
  {
    ArtifactRepository repo(tmp.path());
    id = repo.create_artifact(meta("persist"));
    repo.add_version(id, archive_of("1"));
    repo.create_artifact(meta("second", Visibility::private_));
    before = repo.list({}, true);
  }
  ArtifactRepository again(tmp.path());
  EXPECT_EQ(again.list({}, true), before);
  EXPECT_EQ(again.add_version(id, archive_of("2")).version_id, 2);
}

TEST(Repository, TruncatedJournalTailIsDropped) {
  TempDir tmp;
  std::string id;
  {
    ArtifactRepository repo(tmp.path());
    id = repo.create_artifact(meta("crash"));
    repo.add_version(id, archive_of("1"));
  }
  const auto journal = tmp / "journal.jsonl";
  const auto good = cbtest::read_file(journal);
  cbtest::write_file(journal, good + "{\"op\":\"version\",\"artifact_id\":\"" + id.substr(0, 10));
  {
    ArtifactRepository repo(tmp.path());
    EXPECT_EQ(repo.get(id)->versions.size(), 1u);
    EXPECT_EQ(repo.add_version(id, archive_of("2")).version_id, 2);
  }
  ArtifactRepository repo(tmp.path());
  EXPECT_EQ(repo.get(id)->versions.size(), 2u);
}

TEST(Repository, CorruptJournalMiddleIsFatal) {
  TempDir tmp;
  {
    ArtifactRepository repo(tmp.path());
    repo.create_artifact(meta("a"));
    repo.create_artifact(meta("b"));
  }
  auto text = cbtest::read_file(tmp / "journal.jsonl");
  text[5] = '#';
  cbtest::write_file(tmp / "journal.jsonl", text);
  EXPECT_EQ(code_of([&] { ArtifactRepository r(tmp.path()); }), "repository.journal");
}

TEST(Repository, FsckAndDownloadDetectTampering) {
  TempDir tmp;
  ArtifactRepository repo(tmp.path());
  const auto id = repo.create_artifact(meta("x"));
  const auto v = repo.add_version(id, archive_of("1"));
  const auto other = repo.add_version(id, archive_of("2"));
  auto clean = repo.fsck();
  EXPECT_TRUE(clean.clean());
  EXPECT_EQ(clean.blobs_checked, 2u);

  cbtest::write_file(tmp / "blobs" / v.content_hash, "tampered");
  std::filesystem::remove(tmp / "blobs" / other.content_hash);
  const auto report = repo.fsck();
  EXPECT_FALSE(report.clean());
  EXPECT_EQ(report.mismatches, std::vector<std::string>{v.content_hash});
  EXPECT_EQ(report.missing, std::vector<std::string>{other.content_hash});
  EXPECT_EQ(code_of([&] { repo.download(id, 1); }), "repository.integrity");
  EXPECT_EQ(code_of([&] { repo.download(id, 2); }), "repository.integrity");
}

TEST(Repository, LaunchesGetIndependentWorkspaces) {
  TempDir tmp;
  ArtifactRepository repo(tmp.path());
  const auto id = repo.create_artifact(meta("x"));
  repo.add_version(id, archive_of("hello"));
  const auto h1 = repo.launch(id, 1);
  const auto h2 = repo.launch(id, 1);
  EXPECT_NE(h1.handle_id, h2.handle_id);
  EXPECT_NE(h1.workspace_path, h2.workspace_path);
  EXPECT_EQ(h1.state, RunState::extracted);
  EXPECT_EQ(cbtest::read_file(h1.workspace_path / "README"), "hello");
  cbtest::write_file(h1.workspace_path / "README", "edited");
  EXPECT_EQ(cbtest::read_file(h2.workspace_path / "README"), "hello");
  auto h = *repo.run(h1.handle_id);
  h.state = RunState::finished;
  h.completed = h.total = 3;
  repo.update_run(h);
  EXPECT_EQ(repo.run(h1.handle_id)->state, RunState::finished);
  EXPECT_FALSE(repo.run("missing"));
}

TEST(Repository, ConcurrentWritersAndReaders) {
  TempDir tmp;
  ArtifactRepository repo(tmp.path());
  const auto id = repo.create_artifact(meta("busy"));
  std::atomic<bool> stop{false};
  std::atomic<int> reads{0};
  std::thread reader([&] {
    while (!stop) {
      const auto a = repo.get(id);
      // Versions observed by a reader are always a contiguous 1..n prefix.
      for (std::size_t i = 0; i < a->versions.size(); ++i) ASSERT_EQ(a->versions[i].version_id, int(i) + 1);
      ++reads;
    }
  });
  std::vector<std::thread> writers;
  for (int t = 0; t < 4; ++t) {
    writers.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) repo.add_version(id, archive_of(std::to_string(t * 100 + i)));
    });
  }
  for (auto& w : writers) w.join();
  stop = true;
  reader.join();
  EXPECT_GT(reads.load(), 0);
  EXPECT_EQ(repo.get(id)->versions.size(), 40u);
  ArtifactRepository again(tmp.path());
  EXPECT_EQ(again.get(id)->versions.size(), 40u);
  EXPECT_TRUE(again.fsck().clean());
}

TEST(Repository, JsonRoundTrips) {
  const auto m = meta("json \"quoted\"");
  const auto j = artifact_to_json(Artifact{"id-1", m, "2026-01-01T00:00:00Z", 0, {}});
  EXPECT_NE(j.find("\\\"quoted\\\""), std::string::npos);
  ArtifactVersion v{3, "2026-01-01T00:00:00Z", std::string(64, 'a'), 1234};
  EXPECT_EQ(version_from_json(version_to_json(v)), v);
  RunHandle h;
  h.handle_id = "h";
  h.artifact_id = "a";
  h.version_id = 2;
  h.state = RunState::running;
  h.completed = 1;
  h.total = 3;
  const auto back = run_handle_from_json(run_handle_to_json(h));
  EXPECT_EQ(back.state, RunState::running);
  EXPECT_EQ(back.completed, 1);
  EXPECT_EQ(back.total, 3);
  EXPECT_THROW(meta_from_json("[1,2]"), Error);
}
