#include "cb/archive.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cb/error.hpp"

namespace fs = std::filesystem;

namespace cb {

namespace {

[[noreturn]] void corrupt(const std::string& why) {
  throw Error(ErrorKind::repository, "archive.corrupt", "corrupt archive: " + why);
}

}  // namespace

std::string gzip_compress(std::string_view data) {
  z_stream zs{};
  // 15 window bits + 16 selects the gzip wrapper; zlib leaves mtime at 0.
  if (deflateInit2(&zs, 9, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorKind::repository, "archive.zlib", "deflateInit2 failed");
  }
  std::string out;
  out.resize(deflateBound(&zs, static_cast<uLong>(data.size())) + 64);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const auto written = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorKind::repository, "archive.zlib", "deflate did not finish");
  out.resize(written);
  return out;
}

std::string gzip_decompress(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw Error(ErrorKind::repository, "archive.zlib", "inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  std::array<char, 1 << 16> buf{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      corrupt(zs.msg ? zs.msg : "inflate failed");
    }
    out.append(buf.data(), buf.size() - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      corrupt("truncated gzip stream");
    }
  }
  const bool trailing = zs.avail_in != 0;
  inflateEnd(&zs);
  if (trailing) corrupt("trailing data after gzip stream");
  return out;
}

// ---------------------------------------------------------------------------
// ustar
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kBlock = 512;

void check_path(const std::string& path) {
  const fs::path p(path);
  bool bad = path.empty() || p.is_absolute() || path.back() == '/';
  for (const auto& part : p) {
    if (part == ".." || part == ".") bad = true;
  }
  if (bad) throw Error(ErrorKind::usage, "archive.path", "unsafe archive path '" + path + "'");
}

void put_octal(char* field, std::size_t width, std::uint64_t value) {
  // width-1 octal digits followed by NUL.
  std::string digits(width - 1, '0');
  for (std::size_t i = width - 1; i-- > 0 && value;) {
    digits[i] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
  if (value) throw Error(ErrorKind::usage, "archive.size", "value too large for ustar field");
  std::memcpy(field, digits.data(), width - 1);
  field[width - 1] = '\0';
}

std::uint64_t get_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  std::size_t i = 0;
  while (i < width && field[i] == ' ') ++i;
  for (; i < width && field[i] >= '0' && field[i] <= '7'; ++i) v = (v << 3) | static_cast<std::uint64_t>(field[i] - '0');
  for (; i < width; ++i) {
    if (field[i] != '\0' && field[i] != ' ') corrupt("bad octal field");
  }
  return v;
}

std::string field_string(const char* field, std::size_t width) {
  return std::string(field, strnlen(field, width));
}

void split_name(const std::string& path, char* name, char* prefix) {
  if (path.size() <= 100) {
    std::memcpy(name, path.data(), path.size());
    return;
  }
  for (std::size_t cut = path.find('/'); cut != std::string::npos; cut = path.find('/', cut + 1)) {
    if (cut <= 155 && path.size() - cut - 1 <= 100) {
      std::memcpy(prefix, path.data(), cut);
      std::memcpy(name, path.data() + cut + 1, path.size() - cut - 1);
      return;
    }
  }
  throw Error(ErrorKind::usage, "archive.path", "path too long for ustar: " + path);
}

}  // namespace

std::string pack_tar(std::vector<ArchiveEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const ArchiveEntry& a, const ArchiveEntry& b) { return a.path < b.path; });
  std::string out;
  for (const auto& e : entries) {
    check_path(e.path);
    std::array<char, kBlock> h{};
    split_name(e.path, h.data(), h.data() + 345);
    put_octal(h.data() + 100, 8, e.directory ? 0755 : (e.executable ? 0755 : 0644));
    put_octal(h.data() + 108, 8, 0);
    put_octal(h.data() + 116, 8, 0);
    put_octal(h.data() + 124, 12, e.directory ? 0 : e.data.size());
    put_octal(h.data() + 136, 12, 0);
    h[156] = e.directory ? '5' : '0';
    std::memcpy(h.data() + 257, "ustar", 6);
    std::memcpy(h.data() + 263, "00", 2);
    std::memset(h.data() + 148, ' ', 8);
    unsigned sum = 0;
    for (char c : h) sum += static_cast<unsigned char>(c);
    put_octal(h.data() + 148, 7, sum);
    h[155] = ' ';
    out.append(h.data(), kBlock);
    if (!e.directory) {
      out += e.data;
      out.append((kBlock - e.data.size() % kBlock) % kBlock, '\0');
    }
  }
  out.append(2 * kBlock, '\0');
  return out;
}

std::vector<ArchiveEntry> unpack_tar(std::string_view tar) {
  std::vector<ArchiveEntry> out;
  std::size_t pos = 0;
  while (true) {
    if (pos + kBlock > tar.size()) corrupt("truncated tar header");
    const char* h = tar.data() + pos;
    if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) break;
    unsigned sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(h[i]);
    if (sum != get_octal(h + 148, 8)) corrupt("tar header checksum mismatch");
    const auto size = get_octal(h + 124, 12);
    const char type = h[156];
    pos += kBlock;
    if (pos + size > tar.size()) corrupt("truncated tar member");
    std::string name = field_string(h, 100);
    if (std::memcmp(h + 257, "ustar", 5) == 0) {
      const auto prefix = field_string(h + 345, 155);
      if (!prefix.empty()) name = prefix + "/" + name;
    }
    while (!name.empty() && name.back() == '/') name.pop_back();
    if (name.rfind("./", 0) == 0) name.erase(0, 2);
    if (type == '0' || type == '\0' || type == '5') {
      check_path(name);
      ArchiveEntry e;
      e.path = name;
      e.directory = type == '5';
      e.executable = !e.directory && (get_octal(h + 100, 8) & 0100);
      if (!e.directory) e.data.assign(tar.data() + pos, size);
      out.push_back(std::move(e));
    }
    // Links, pax headers and other member types are skipped.
    pos += size + (kBlock - size % kBlock) % kBlock;
  }
  return out;
}

std::string pack_tar_gz(std::vector<ArchiveEntry> entries) { return gzip_compress(pack_tar(std::move(entries))); }

std::vector<ArchiveEntry> unpack_tar_gz(std::string_view archive) { return unpack_tar(gzip_decompress(archive)); }

std::vector<ArchiveEntry> read_tree(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::usage, "archive.input", "not a directory: " + dir.string());
  std::vector<ArchiveEntry> out;
  for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
    const auto rel = fs::relative(it->path(), dir).generic_string();
    if (it->path().filename() == ".git") {
      if (it->is_directory()) it.disable_recursion_pending();
      continue;
    }
    ArchiveEntry e;
    e.path = rel;
    if (it->is_directory()) {
      e.directory = true;
    } else if (it->is_regular_file()) {
      std::ifstream in(it->path(), std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      e.data = ss.str();
      e.executable = (fs::status(it->path()).permissions() & fs::perms::owner_exec) != fs::perms::none;
    } else {
      continue;
    }
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const ArchiveEntry& a, const ArchiveEntry& b) { return a.path < b.path; });
  return out;
}

std::string package_directory(const fs::path& dir) { return pack_tar_gz(read_tree(dir)); }

void extract_to(std::string_view archive, const fs::path& dest) {
  const auto entries = unpack_tar_gz(archive);
  fs::create_directories(dest);
  for (const auto& e : entries) {
    const auto target = dest / fs::path(e.path);
    if (e.directory) {
      fs::create_directories(target);
      continue;
    }
    fs::create_directories(target.parent_path());
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    out.write(e.data.data(), static_cast<std::streamsize>(e.data.size()));
    if (!out) throw Error(ErrorKind::repository, "archive.write", "cannot write " + target.string());
    out.close();
    if (e.executable) {
      fs::permissions(target, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                      fs::perm_options::add);
    }
  }
}

}  // namespace cb
