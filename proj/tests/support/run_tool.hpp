#pragma once

// Runs the prefmargin executable as a subprocess.

#include <cstdlib>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace testing_support {

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

/// Exit status of `prefmargin args...`; stdout and stderr go to `log`.
inline int run_tool(const std::vector<std::string>& args, const std::string& log = "/dev/null",
                    const std::string& cwd = "") {
    std::string cmd;
    if (!cwd.empty()) cmd += "cd " + shell_quote(cwd) + " && ";
    cmd += shell_quote(PREFMARGIN_CLI_PATH);
    for (const auto& a : args) cmd += " " + shell_quote(a);
    cmd += " >>" + shell_quote(log) + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

}  // namespace testing_support
