/* Plain C client: the header must compile as C and the library must run a
 * scenario end to end. */
#include <stdio.h>
#include <string.h>

#include "masched.h"

int main(int argc, char** argv) {
  mas_engine* e = NULL;
  char* hash = NULL;
  int advanced = 1, steps = 0;
  if (argc < 2) return 2;
  if (mas_engine_open_file(argv[1], "{\"seed\": 5}", &e) != MAS_OK) {
    fprintf(stderr, "open: %s\n", mas_last_error());
    return 1;
  }
  while (advanced) {
    if (mas_engine_step(e, &advanced) != MAS_OK) return 1;
    steps += advanced;
  }
  if (mas_engine_hash(e, &hash) != MAS_OK || strlen(hash) != 16) return 1;
  printf("%d steps, state %s\n", steps, hash);
  mas_string_free(hash);
  mas_engine_free(e);
  return steps > 0 ? 0 : 1;
}
