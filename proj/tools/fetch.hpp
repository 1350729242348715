#pragma once

#include <string>
#include <vector>

/// One downloadable dataset file: destination (relative to the data dir),
/// expected MD5 of the archive, and candidate URLs in preference order.
struct FetchItem {
    std::string relative_path;
    std::string md5;
    std::vector<std::string> urls;
};

/// Built-in manifest for a dataset id ("mnist", "fashion-mnist").
std::vector<FetchItem> builtin_manifest(const std::string& dataset);

/// Parses a manifest file: one item per line,
/// "<relative-path> <md5> <url> [more-urls...]"; '#' starts a comment.
std::vector<FetchItem> parse_manifest_file(const std::string& path);

/// Hex MD5 of a byte buffer.
std::string md5_hex(const std::vector<unsigned char>& bytes);

/// Downloads every item into data_dir, verifying checksums; skips files that
/// already exist with a matching checksum. Returns the number of failures.
int fetch_items(const std::vector<FetchItem>& items, const std::string& data_dir, bool quiet);
