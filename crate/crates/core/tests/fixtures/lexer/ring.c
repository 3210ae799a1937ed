#include <stdio.h>
#include "ring.h"

#define CAP 16

typedef struct {
    int items[CAP];
    unsigned head, tail;
} ring_t;

/* Push one value; returns 0 when full. */
static int ring_push(ring_t *r, int value) {
    unsigned next = (r->tail + 1) % CAP;
    if (next == r->head) {
        return 0;
    }
    r->items[r->tail] = value;
    r->tail = next;
    return 1;
}

int main(void) {
    ring_t ring = {0};
    for (int i = 0; i < 20; ++i) {
        if (!ring_push(&ring, i * 2)) printf("full at %d\n", i);
    }
    return ring.head != ring.tail ? 0 : 'x';
}
