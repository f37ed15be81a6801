#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cb {

// Deterministic .tar.gz: ustar entries in path order, mtime/uid/gid zero,
// gzip header without timestamp. Same tree in, same bytes out.

struct ArchiveEntry {
  std::string path;  // relative, '/'-separated; directories without trailing '/'
  bool directory = false;
  bool executable = false;
  std::string data;

  bool operator==(const ArchiveEntry&) const = default;
};

std::string gzip_compress(std::string_view data);
// Throws Error(repository, "archive.corrupt") on malformed input.
std::string gzip_decompress(std::string_view data);

// Entries are sorted by path before writing. Throws Error(usage,
// "archive.path") for absolute paths, ".." components or names too long for ustar.
std::string pack_tar(std::vector<ArchiveEntry> entries);
std::vector<ArchiveEntry> unpack_tar(std::string_view tar);

std::string pack_tar_gz(std::vector<ArchiveEntry> entries);
std::vector<ArchiveEntry> unpack_tar_gz(std::string_view archive);

// Every file and directory below `dir` except .git.
std::vector<ArchiveEntry> read_tree(const std::filesystem::path& dir);
std::string package_directory(const std::filesystem::path& dir);

// Writes entries under `dest`, which is created if needed.
void extract_to(std::string_view archive, const std::filesystem::path& dest);

}  // namespace cb
