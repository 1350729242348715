#include "fetch.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ntr/common.hpp"

#ifdef NTR_HAVE_OPENSSL
#include <openssl/evp.h>
#endif

#include <httplib.h>

namespace fs = std::filesystem;

namespace {

/// The canonical archives. MNIST's original host throttles; the S3 mirror
/// carries identical files. Checksums are the published archive MD5s.
const char* kMnistManifest = R"(
mnist/train-images-idx3-ubyte.gz f68b3c2dcbeaaa9fbdd348bbdeb94873 https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz http://yann.lecun.com/exdb/mnist/train-images-idx3-ubyte.gz
mnist/train-labels-idx1-ubyte.gz d53e105ee54ea40749a09fcbcd1e9432 https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz http://yann.lecun.com/exdb/mnist/train-labels-idx1-ubyte.gz
mnist/t10k-images-idx3-ubyte.gz 9fb629c4189551a2d022fa330f9573f3 https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz http://yann.lecun.com/exdb/mnist/t10k-images-idx3-ubyte.gz
mnist/t10k-labels-idx1-ubyte.gz ec29112dd5afa0611ce80d1b7f02629c https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz http://yann.lecun.com/exdb/mnist/t10k-labels-idx1-ubyte.gz
)";

const char* kFashionManifest = R"(
fashion-mnist/train-images-idx3-ubyte.gz 8d4fb7e6c68d591d4c3dfef9ec88bf0d http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/train-images-idx3-ubyte.gz https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/train-images-idx3-ubyte.gz
fashion-mnist/train-labels-idx1-ubyte.gz 25c81989df183df01b3e8a0aad5dffbe http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/train-labels-idx1-ubyte.gz https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/train-labels-idx1-ubyte.gz
fashion-mnist/t10k-images-idx3-ubyte.gz bef4ecab320f06d8554ea6380940ec79 http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/t10k-images-idx3-ubyte.gz https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/t10k-images-idx3-ubyte.gz
fashion-mnist/t10k-labels-idx1-ubyte.gz bb300cfdad3c16e7a12a480ee83cd310 http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/t10k-labels-idx1-ubyte.gz https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/t10k-labels-idx1-ubyte.gz
)";

std::vector<FetchItem> parse_manifest_text(const std::string& text) {
    std::vector<FetchItem> items;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        FetchItem item;
        if (!(ls >> item.relative_path >> item.md5)) continue;
        std::string url;
        while (ls >> url) item.urls.push_back(url);
        if (item.urls.empty())
            throw ntr::FormatError("manifest entry without URLs: " + item.relative_path);
        items.push_back(std::move(item));
    }
    return items;
}

bool download(const std::string& url, std::vector<unsigned char>& out) {
    // Split scheme://host/path.
    const std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return false;
    const std::string scheme = url.substr(0, scheme_end);
    const std::size_t host_start = scheme_end + 3;
    const std::size_t path_start = url.find('/', host_start);
    const std::string host = url.substr(host_start, path_start - host_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    auto run = [&](auto& client) -> bool {
        client.set_follow_location(true);
        client.set_connection_timeout(20);
        client.set_read_timeout(120);
        auto res = client.Get(path);
        if (!res || res->status != 200) return false;
        out.assign(res->body.begin(), res->body.end());
        return true;
    };

#ifdef NTR_HAVE_OPENSSL
    if (scheme == "https") {
        httplib::SSLClient client(host);
        client.enable_server_certificate_verification(true);
        return run(client);
    }
#endif
    if (scheme == "http") {
        httplib::Client client(host);
        return run(client);
    }
    return false;
}

} // namespace

std::vector<FetchItem> builtin_manifest(const std::string& dataset) {
    if (dataset == "mnist") return parse_manifest_text(kMnistManifest);
    if (dataset == "fashion-mnist") return parse_manifest_text(kFashionManifest);
    if (dataset == "all") {
        auto items = parse_manifest_text(kMnistManifest);
        auto more = parse_manifest_text(kFashionManifest);
        items.insert(items.end(), more.begin(), more.end());
        return items;
    }
    throw ntr::ArgumentError("unknown dataset '" + dataset + "' (mnist|fashion-mnist|all)");
}

std::vector<FetchItem> parse_manifest_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ntr::FormatError("cannot open manifest: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_manifest_text(ss.str());
}

std::string md5_hex(const std::vector<unsigned char>& bytes) {
#ifdef NTR_HAVE_OPENSSL
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_md5(), nullptr);
    EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        char b[3];
        std::snprintf(b, sizeof(b), "%02x", digest[i]);
        hex += b;
    }
    return hex;
#else
    (void)bytes;
    throw ntr::StateError("md5_hex: built without OpenSSL");
#endif
}

int fetch_items(const std::vector<FetchItem>& items, const std::string& data_dir, bool quiet) {
    int failures = 0;
    for (const FetchItem& item : items) {
        const fs::path dest = fs::path(data_dir) / item.relative_path;
        std::error_code ec;
        if (fs::exists(dest, ec)) {
            std::ifstream f(dest, std::ios::binary);
            std::vector<unsigned char> existing((std::istreambuf_iterator<char>(f)),
                                                std::istreambuf_iterator<char>());
            if (md5_hex(existing) == item.md5) {
                if (!quiet) std::printf("ok (cached)  %s\n", item.relative_path.c_str());
                continue;
            }
        }
        bool done = false;
        for (const std::string& url : item.urls) {
            std::vector<unsigned char> bytes;
            if (!download(url, bytes)) {
                if (!quiet) std::printf("unreachable  %s\n", url.c_str());
                continue;
            }
            const std::string got = md5_hex(bytes);
            if (got != item.md5) {
                if (!quiet)
                    std::printf("checksum mismatch for %s: got %s, want %s\n", url.c_str(), got.c_str(),
                                item.md5.c_str());
                continue;
            }
            fs::create_directories(dest.parent_path(), ec);
            std::ofstream out(dest, std::ios::binary | std::ios::trunc);
            out.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
            if (!out) break;
            if (!quiet) std::printf("fetched      %s (%zu bytes)\n", item.relative_path.c_str(), bytes.size());
            done = true;
            break;
        }
        if (!done) {
            std::fprintf(stderr, "failed to fetch %s\n", item.relative_path.c_str());
            ++failures;
        }
    }
    return failures;
}
