#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

#include "cb/archive.hpp"
#include "cb/digest.hpp"
#include "cb/error.hpp"
#include "support.hpp"

using namespace cb;
using cbtest::TempDir;

namespace {

std::vector<ArchiveEntry> sample_entries() {
  return {
      {"workflow.yaml", false, false, "repetitions: 3\n"},
      {"data", true, false, ""},
      {"data/capture.txt", false, false, std::string(5000, 'x')},
      {"bin/run.sh", false, true, "#!/bin/sh\necho hi\n"},
      {"deeply/nested/" + std::string(90, 'd') + "/" + std::string(40, 'f') + ".txt", false, false, "long"},
      {"empty.txt", false, false, ""},
  };
}

bool have_python() { return std::system("python3 -c 'import tarfile' >/dev/null 2>&1") == 0; }

}  // namespace

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update("a");
  h.update("bc");
  EXPECT_EQ(h.hex_digest(), sha256_hex("abc"));
}

TEST(Gzip, RoundTripAndCorruption) {
  const std::string data(100000, 'q');
  const auto gz = gzip_compress(data);
  EXPECT_LT(gz.size(), data.size());
  EXPECT_EQ(gzip_decompress(gz), data);
  EXPECT_EQ(gz, gzip_compress(data));  // no timestamp in the header
  // A flip inside a stream of back-references can decode to the same bytes,
  // so corrupt literal-heavy data and the CRC trailer instead.
  std::mt19937 rng(7);
  std::string noise(20000, '\0');
  for (auto& ch : noise) ch = static_cast<char>(rng() & 0xff);
  const auto gn = gzip_compress(noise);
  auto broken = gn;
  broken[broken.size() / 2] ^= 0x55;
  EXPECT_THROW(gzip_decompress(broken), Error);
  auto bad_crc = gz;
  bad_crc[bad_crc.size() - 6] ^= 0x01;
  EXPECT_THROW(gzip_decompress(bad_crc), Error);
  EXPECT_THROW(gzip_decompress(gz + "junk"), Error);
  EXPECT_THROW(gzip_decompress("not gzip at all"), Error);
  EXPECT_THROW(gzip_decompress(gz.substr(0, gz.size() / 2)), Error);
}

TEST(Tar, RoundTripSortedAndDeterministic) {
  auto entries = sample_entries();
  const auto a = pack_tar_gz(entries);
  std::reverse(entries.begin(), entries.end());
  EXPECT_EQ(pack_tar_gz(entries), a);
  const auto back = unpack_tar_gz(a);
  auto expected = sample_entries();
  std::sort(expected.begin(), expected.end(), [](const auto& x, const auto& y) { return x.path < y.path; });
  EXPECT_EQ(back, expected);
}

TEST(Tar, RejectsUnsafePaths) {
  for (const char* bad : {"/etc/passwd", "../escape", "a/../../b", ""}) {
    EXPECT_THROW(pack_tar({{bad, false, false, "x"}}), Error) << bad;
  }
  EXPECT_THROW(pack_tar({{std::string(300, 'a'), false, false, "x"}}), Error);
}

TEST(Tar, DetectsChecksumDamage) {
  auto tar = pack_tar(sample_entries());
  tar[10] ^= 0x01;  // inside the first header's name field
  EXPECT_THROW(unpack_tar(tar), Error);
  EXPECT_THROW(unpack_tar(std::string(700, 'z')), Error);
}

TEST(Tar, DirectoryPackagingAndExtraction) {
  TempDir tmp;
  cbtest::copy_tree(cbtest::savanna_dir(), tmp / "src");
  std::filesystem::remove_all(tmp / "src" / "results");
  cbtest::write_file(tmp / "src" / ".git" / "HEAD", "ref: x\n");
  cbtest::write_file(tmp / "src" / "run.sh", "#!/bin/sh\n");
  std::filesystem::permissions(tmp / "src" / "run.sh", std::filesystem::perms::owner_exec,
                               std::filesystem::perm_options::add);
  const auto a = package_directory(tmp / "src");
  EXPECT_EQ(package_directory(tmp / "src"), a);
  for (const auto& e : unpack_tar_gz(a)) EXPECT_NE(e.path.substr(0, 4), ".git");

  extract_to(a, tmp / "out");
  EXPECT_EQ(cbtest::read_file(tmp / "out" / "workflow.yaml"), cbtest::read_file(tmp / "src" / "workflow.yaml"));
  EXPECT_TRUE((std::filesystem::status(tmp / "out" / "run.sh").permissions() & std::filesystem::perms::owner_exec) !=
              std::filesystem::perms::none);
  EXPECT_FALSE(std::filesystem::exists(tmp / "out" / ".git"));
  EXPECT_EQ(package_directory(tmp / "out"), a);
}

TEST(Tar, PythonTarfileReadsOurArchives) {
  if (!have_python()) GTEST_SKIP() << "python3 not available";
  TempDir tmp;
  cbtest::write_file(tmp / "a.tar.gz", pack_tar_gz(sample_entries()));
  const std::string script =
      "import sys, tarfile\n"
      "t = tarfile.open(sys.argv[1])\n"
      "out = open(sys.argv[2], 'w')\n"
      "for m in t.getmembers():\n"
      "    data = t.extractfile(m).read() if m.isfile() else b''\n"
      "    out.write('%s %d %o %d\\n' % (m.name, len(data), m.mode, m.mtime))\n";
  cbtest::write_file(tmp / "list.py", script);
  const auto cmd = "python3 " + (tmp / "list.py").string() + " " + (tmp / "a.tar.gz").string() + " " +
                   (tmp / "out.txt").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto listing = cbtest::read_file(tmp / "out.txt");
  EXPECT_NE(listing.find("bin/run.sh 18 755 0\n"), std::string::npos) << listing;
  EXPECT_NE(listing.find("data/capture.txt 5000 644 0\n"), std::string::npos) << listing;
  EXPECT_NE(listing.find(std::string(40, 'f') + ".txt 4 644 0\n"), std::string::npos) << listing;
}

TEST(Tar, WeReadPythonArchives) {
  if (!have_python()) GTEST_SKIP() << "python3 not available";
  TempDir tmp;
  const std::string script =
      "import io, sys, tarfile\n"
      "with tarfile.open(sys.argv[1], 'w:gz', format=tarfile.USTAR_FORMAT) as t:\n"
      "    for name, data in [('x/one.txt', b'one'), ('two.bin', bytes(range(256)) * 4)]:\n"
      "        info = tarfile.TarInfo(name)\n"
      "        info.size = len(data)\n"
      "        t.addfile(info, io.BytesIO(data))\n";
  cbtest::write_file(tmp / "mk.py", script);
  const auto cmd = "python3 " + (tmp / "mk.py").string() + " " + (tmp / "p.tar.gz").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto entries = unpack_tar_gz(cbtest::read_file(tmp / "p.tar.gz"));
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].path, "x/one.txt");
  EXPECT_EQ(entries[0].data, "one");
  EXPECT_EQ(entries[1].data.size(), 1024u);
}
