import os.path
import re
import sys
from typing import Optional, Set, Tuple


def remove_repeated_declarations(
    content: str, seen_declarations: Set[str]
) -> Tuple[str, Set[str]]:
    def remove_if_repeated(m):
        declaration = m.group(0).replace("\n", "").strip()
        if declaration in seen_declarations:
            print(f"Removing repeated declaration: {declaration}")
            return f"/* {m.group(0)}  (repeated) */"
        else:
            seen_declarations.add(declaration)
            return m.group(0)

    content = re.sub(
        r"^extern .*?;", remove_if_repeated, content, flags=re.RegexFlag.MULTILINE
    )
    return content, seen_declarations


def build_cdef(header_path: str, destination_path: Optional[str] = None) -> str:
    with open(header_path, "r") as f:
        content = f.read()

    # Remove comments
    content = re.sub(r"//.*", "", content)
    content = re.sub(r"/\*.*?\*/", "", content, flags=re.RegexFlag.DOTALL)

    # Remove preprocessor lines that are not number constants
    content = "\n".join(
        line
        for line in content.splitlines()
        if not line.lstrip().startswith("#")
        or re.match(r"^\s*#define +\w+ +-?\d+\s*$", line)
    )
    content = re.sub(r"\n\n\n+", "\n\n", content)

    content, _ = remove_repeated_declarations(content, set())

    # Add error handler
    content += '\n\nextern "Python" void py_error_handler(int, int, char *);\n'

    if destination_path:
        with open(destination_path, "w") as f:
            f.write(content)
    return content


if __name__ == "__main__":
    if len(sys.argv) > 1:
        build_cdef(*sys.argv[1:])
    else:
        builder_dir = os.path.dirname(os.path.abspath(__file__))
        build_cdef(
            os.path.join(builder_dir, "fracising.h"),
            os.path.join(builder_dir, "fracising_cdef.h"),
        )
